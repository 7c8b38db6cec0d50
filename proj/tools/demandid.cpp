#include "demandid/cli.hpp"

#include "CLI11.hpp"

#include <iostream>

int main(int argc, char** argv) {
  using namespace demandid::cli;
  CLI::App app{"Demand identification experiments"};
  app.require_subcommand(1);

  Options opts;
  std::uint64_t seed = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opts.config, "INI config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "override [run] seed");
    sub->add_option("--out", opts.out, "output directory");
    sub->add_flag("--oracle", opts.oracle, "keep latent columns in outputs");
    sub->add_option("--threads", opts.threads, "worker threads (0 = hardware)")
        ->check(CLI::NonNegativeNumber);
  };

  auto* simulate = app.add_subcommand("simulate", "draw a market dataset");
  auto* screen = app.add_subcommand("screen", "screen a candidate inverse demand");
  auto* counterfactual = app.add_subcommand("counterfactual", "counterfactual invariance audit");
  auto* certify = app.add_subcommand("certify-discrete", "certify faithfulness on a discrete index");
  auto* deconv = app.add_subcommand("deconv", "scale-perturbed deconvolution");
  deconv->require_subcommand(1);
  auto* deconv_solve = deconv->add_subcommand("solve", "Neumann-series solve");
  auto* deconv_diagnose = deconv->add_subcommand("diagnose", "contraction diagnostic only");
  auto* cex = app.add_subcommand("counterexample", "faithfulness counterexample");
  for (auto* sub : {simulate, screen, counterfactual, certify, deconv_solve, deconv_diagnose, cex}) {
    add_common(sub);
  }
  auto* report = app.add_subcommand("report", "print a report file");
  std::filesystem::path report_path;
  report->add_option("file", report_path, "report JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  for (auto* sub : {simulate, screen, counterfactual, certify, deconv_solve, deconv_diagnose, cex}) {
    if (sub->count("--seed") > 0) opts.seed = seed;
  }

  if (*simulate) return guarded([&] { return cmd_simulate(opts); });
  if (*screen) return guarded([&] { return cmd_screen(opts); });
  if (*counterfactual) return guarded([&] { return cmd_counterfactual(opts); });
  if (*certify) return guarded([&] { return cmd_certify_discrete(opts); });
  if (*deconv_solve) return guarded([&] { return cmd_deconv_solve(opts); });
  if (*deconv_diagnose) return guarded([&] { return cmd_deconv_diagnose(opts); });
  if (*cex) return guarded([&] { return cmd_counterexample(opts); });
  if (*report) return guarded([&] { return cmd_report(report_path, std::cout); });
  return kUsage;
}
