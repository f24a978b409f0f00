#pragma once

#include <iosfwd>
#include <optional>

#include "remnant/report.hpp"

// The five subcommands as library calls. Each returns the report and the
// process exit code; nothing here prints, so the CLI and the Python module
// share one implementation.
namespace remnant::cli {

enum Exit : int {
  kOk = 0,
  kFailure = 1,
  kUnrecognizedVolume = 2,
  kNothingRecovered = 3,
  kOracleMismatch = 4,
  kBadConfig = 5,
};

struct Options {
  FsChoice fs = FsChoice::Auto;
  bool deep = false;
  std::uint64_t offset = 0;
  std::optional<std::filesystem::path> out;
  unsigned jobs = 1;
  bool same_media = false;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> truth;
};

struct CommandResult {
  int exit_code = kOk;
  report::json report;
  std::vector<std::string> diagnostics;  // warnings and errors, one per line
};

CommandResult run_scan(const std::filesystem::path& image, const Options& opts);
CommandResult run_recover(const std::filesystem::path& image, const Options& opts);
/// Uses opts.truth as the sidecar.
CommandResult run_audit(const std::filesystem::path& image, const Options& opts);
/// `corpus` is a CorpusSpec object, optionally with "mutations", or
/// {"preset": "table1", "filesystem": ...}. --seed offsets every file seed.
CommandResult run_forge(const nlohmann::json& corpus, const std::filesystem::path& image_out,
                        const std::optional<std::filesystem::path>& sidecar_out, const Options& opts);
/// `base_dir` resolves relative paths inside the config (trace files, dump output).
CommandResult run_simulate(const nlohmann::json& config, const std::filesystem::path& base_dir, const Options& opts);

nlohmann::json load_json_file(const std::filesystem::path& path);

/// Prints diagnostics to `err`, the text report to `out` (or JSON when
/// json_out is "-"), writes the JSON file if asked, returns the exit code.
int emit(const CommandResult& result, const std::optional<std::string>& json_out, std::ostream& out,
         std::ostream& err);

}  // namespace remnant::cli
