// remnant: scan, recover, audit, forge, simulate.
#include <CLI11.hpp>

#include <iostream>

#include "remnant/commands.hpp"

namespace cli = remnant::cli;

int main(int argc, char** argv) {
  CLI::App app{"Deleted-file recovery for FAT/NTFS images and a flash remanence simulator"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(remnant::report::kToolVersion));

  cli::Options opts;
  std::string fs = "auto";
  std::optional<std::string> json_out;
  std::string image;
  std::string out_dir;
  std::string truth;

  auto add_volume_flags = [&](CLI::App* sub) {
    sub->add_option("image", image, "Raw volume image")->required();
    sub->add_option("--fs", fs, "Filesystem to expect")->check(CLI::IsMember({"auto", "fat", "ntfs"}));
    sub->add_option("--offset", opts.offset, "Volume start within the image, in bytes");
    sub->add_option("--json", json_out, "Write the JSON report here ('-' prints it instead of text)");
  };

  auto* scan = app.add_subcommand("scan", "List live and deleted entries");
  add_volume_flags(scan);
  scan->add_flag("--deep", opts.deep, "Carve orphaned directories / MFT records");
  scan->add_option("--jobs", opts.jobs, "Worker threads")->check(CLI::PositiveNumber);

  auto* recover = app.add_subcommand("recover", "Recover deleted files");
  add_volume_flags(recover);
  recover->add_flag("--deep", opts.deep, "Carve orphaned directories / MFT records");
  recover->add_option("--out", out_dir, "Directory for recovered files (omit to only hash them)");
  recover->add_option("--jobs", opts.jobs, "Worker threads")->check(CLI::PositiveNumber);
  recover->add_flag("--same-media", opts.same_media, "Allow writing onto the media being recovered");
  recover->add_option("--truth", truth, "Forge sidecar; enables byte-identical scoring");

  auto* audit = app.add_subcommand("audit", "Per-file sanitization verdict against a forge sidecar");
  add_volume_flags(audit);
  std::string sidecar_pos;
  audit->add_option("sidecar", sidecar_pos, "Forge sidecar (same as --truth)");
  audit->add_option("--truth", truth, "Forge sidecar");

  auto* forge = app.add_subcommand("forge", "Build a synthetic image from a corpus spec");
  std::string corpus;
  std::string sidecar_out;
  forge->add_option("corpus", corpus, "Corpus JSON")->required()->check(CLI::ExistingFile);
  forge->add_option("--out", out_dir, "Image to write")->required();
  forge->add_option("--truth", sidecar_out, "Sidecar path (default <image>.truth.json)");
  forge->add_option("--seed", opts.seed, "Added to every file's content seed");
  forge->add_option("--json", json_out, "Write the JSON report here ('-' prints it instead of text)");

  auto* simulate = app.add_subcommand("simulate", "Run a flash translation layer experiment");
  std::string config;
  simulate->add_option("config", config, "Simulator config JSON")->required();
  simulate->add_option("--seed", opts.seed, "Override the config seed");
  simulate->add_option("--json", json_out, "Write the JSON report here ('-' prints it instead of text)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  opts.fs = remnant::fs_choice_from_string(fs);
  if (!out_dir.empty()) opts.out = out_dir;
  if (!truth.empty()) opts.truth = truth;
  if (!sidecar_pos.empty()) opts.truth = sidecar_pos;

  cli::CommandResult result;
  if (*scan) {
    result = cli::run_scan(image, opts);
  } else if (*recover) {
    result = cli::run_recover(image, opts);
  } else if (*audit) {
    result = cli::run_audit(image, opts);
  } else if (*forge) {
    try {
      result = cli::run_forge(cli::load_json_file(corpus), out_dir,
                              sidecar_out.empty() ? std::nullopt : std::optional<std::filesystem::path>(sidecar_out),
                              opts);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return cli::kBadConfig;
    }
  } else if (*simulate) {
    nlohmann::json cfg;
    try {
      cfg = cli::load_json_file(config);
    } catch (const std::exception& e) {
      std::cerr << "error: bad config: " << e.what() << "\n";
      return cli::kBadConfig;
    }
    result = cli::run_simulate(cfg, std::filesystem::path(config).parent_path(), opts);
  }
  return cli::emit(result, json_out, std::cout, std::cerr);
}
