#pragma once

#include "demandid/counterexample.hpp"
#include "demandid/deconvolution.hpp"
#include "demandid/market.hpp"
#include "demandid/screening.hpp"

#include <boost/property_tree/ptree.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>

// Config-driven experiment commands. Configs are INI files with sections
// [run], [dgp], [screen], [candidate], [counterfactual], [certify], [grid],
// [scale], [deconv] and [counterexample]; see configs/ for examples.
namespace demandid::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kRejected = 2, kNumerical = 3 };

struct Options {
  std::filesystem::path config;
  std::optional<std::uint64_t> seed;
  std::filesystem::path out = ".";
  bool oracle = false;
  int threads = 0;
};

struct RunConfig {
  boost::property_tree::ptree tree;
  std::filesystem::path directory;  // relative paths resolve against this
  std::string hash;                 // FNV-1a 64 of the config bytes, hex
  std::uint64_t seed = 0;
  bool oracle = false;
  std::filesystem::path out;
};

/// Thrown for missing sections or keys and malformed values.
class ConfigError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

RunConfig load_config(const Options& opts);

std::string fnv1a_hex(std::string_view bytes);

market::DgpConfig parse_dgp(const RunConfig& cfg);
screening::CandidateInverse parse_candidate(const RunConfig& cfg, const demand::DemandSpec& truth);
counterexample::CexConfig parse_counterexample(const RunConfig& cfg);

// Each command writes its report under opts.out and returns an ExitCode.
int cmd_simulate(const Options& opts);
int cmd_screen(const Options& opts);
int cmd_counterfactual(const Options& opts);
int cmd_certify_discrete(const Options& opts);
int cmd_deconv_solve(const Options& opts);
int cmd_deconv_diagnose(const Options& opts);
int cmd_counterexample(const Options& opts);
/// Prints a report file and returns 0 for pass, 2 for reject.
int cmd_report(const std::filesystem::path& report, std::ostream& out);

/// Runs `body`, mapping exceptions to exit codes and messages on stderr.
int guarded(const std::function<int()>& body);

}  // namespace demandid::cli
