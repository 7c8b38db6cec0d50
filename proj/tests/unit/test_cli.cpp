#include "demandid/cli.hpp"

#include "doctest.h"

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace demandid;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("demandid_cli_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_file(const fs::path& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
  return path;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

int run(const std::string& args) {
  const std::string cmd = std::string(DEMANDID_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const char* kSmallDgp = R"([run]
seed = 5

[dgp]
n_markets = 400
J = 2
alpha = 1
price = lambda_index
gamma_x = 0.5
x_support = 0 0; 1 2
z_support = 0 0; 1 1
rho = 0.5
)";

}  // namespace

TEST_CASE("config parsing") {
  const auto dir = scratch("parse");
  cli::Options opts;
  opts.config = write_file(dir / "a.ini", kSmallDgp);
  const auto cfg = cli::load_config(opts);
  CHECK(cfg.seed == 5);
  CHECK(cfg.hash == cli::fnv1a_hex(kSmallDgp));
  const auto dgp = cli::parse_dgp(cfg);
  CHECK(dgp.n_markets == 400);
  CHECK(dgp.x_support.size() == 2);
  CHECK(dgp.x_support[1](1) == 2.0);
  CHECK(dgp.family.gamma_x == 0.5);

  opts.seed = 99;
  CHECK(cli::load_config(opts).seed == 99);

  opts.config = write_file(dir / "b.ini", "[run]\nseed = 1\n");
  try {
    cli::parse_dgp(cli::load_config(opts));
    FAIL("expected a config error");
  } catch (const cli::ConfigError& e) {
    CHECK(std::string(e.what()).find("[dgp]") != std::string::npos);
  }

  opts.seed.reset();
  opts.config = write_file(dir / "c.ini", "[dgp]\nJ = 1\n");
  CHECK_THROWS_AS(cli::load_config(opts), cli::ConfigError);

  opts.config = write_file(dir / "d.ini", "[run]\nseed = 1\n[dgp\n");
  try {
    cli::load_config(opts);
    FAIL("expected a parse error");
  } catch (const cli::ConfigError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("FNV-1a reference values") {
  CHECK(cli::fnv1a_hex("") == "cbf29ce484222325");
  CHECK(cli::fnv1a_hex("a") == "af63dc4c8601ec8c");
}

TEST_CASE("simulate writes n_markets * J rows and is repeatable") {
  const auto dir = scratch("simulate");
  const auto cfg = write_file(dir / "dgp.ini", kSmallDgp);
  REQUIRE(run("simulate --config " + cfg.string() + " --out " + (dir / "a").string()) == 0);
  REQUIRE(run("simulate --config " + cfg.string() + " --out " + (dir / "b").string() + " --threads 3") == 0);
  const auto data = slurp(dir / "a" / "dataset.csv");
  CHECK(std::count(data.begin(), data.end(), '\n') == 1 + 400 * 2);
  CHECK(data == slurp(dir / "b" / "dataset.csv"));
  CHECK(slurp(dir / "a" / "simulate_summary.json") == slurp(dir / "b" / "simulate_summary.json"));
  CHECK(slurp(dir / "a" / "simulate_summary.json").find(cli::fnv1a_hex(slurp(cfg))) != std::string::npos);
}

TEST_CASE("exit codes") {
  const auto dir = scratch("codes");
  const std::string base = kSmallDgp;
  auto cfg = write_file(dir / "truth.ini", base + "\n[candidate]\nkind = truth\n");
  CHECK(run("screen --config " + cfg.string() + " --out " + dir.string()) == 0);
  CHECK(run("report " + (dir / "screen_report.json").string()) == 0);

  cfg = write_file(dir / "bad.ini", base + "\n[candidate]\nkind = spline\n");
  CHECK(run("screen --config " + cfg.string() + " --out " + dir.string()) == 1);
  cfg = write_file(dir / "bad2.ini", base + "\n[candidate]\nkind = logit_inverse\nalpha = x\n");
  CHECK(run("screen --config " + cfg.string() + " --out " + dir.string()) == 1);
  CHECK(run("simulate --config " + (dir / "missing.ini").string()) == 1);
  CHECK(run("frobnicate") == 1);

  cfg = write_file(dir / "deficient.ini", R"([run]
seed = 2
[dgp]
n_markets = 2000
J = 1
alpha = 1
price = exogenous
x_support = 0; 1
z_support = 0; 1
delta_support = 0; 1
delta_law = 0.5 0.5; 0.5 0.5
)");
  CHECK(run("certify-discrete --config " + cfg.string() + " --out " + dir.string()) == 2);
  CHECK(slurp(dir / "certificate.json").find("cannot certify") != std::string::npos);
  CHECK(run("report " + (dir / "certificate.json").string()) == 2);

  cfg = write_file(dir / "flat.ini", "[run]\nseed = 1\n[grid]\nL = 40\nN = 1024\ns = 3\n[scale]\nkind = constant\n");
  CHECK(run("deconv solve --config " + cfg.string() + " --out " + dir.string()) == 0);
  CHECK(slurp(dir / "deconv_solve.json").find("\"terms\": 1") != std::string::npos);

  cfg = write_file(dir / "steep.ini", "[run]\nseed = 1\n[grid]\nL = 40\nN = 1024\ns = 3\n[scale]\npsi = 0.2\n");
  CHECK(run("deconv solve --config " + cfg.string() + " --out " + dir.string()) == 2);
  CHECK(run("deconv diagnose --config " + cfg.string() + " --out " + dir.string()) == 2);
}
