#include "remnant/commands.hpp"

#include <fstream>
#include <iostream>

namespace remnant::cli {

using report::json;

namespace {

json meta(std::string_view command, const std::optional<std::filesystem::path>& image, const Options& opts) {
  json m = {{"tool", "remnant"}, {"version", std::string(report::kToolVersion)}, {"command", std::string(command)}};
  if (image) {
    m["image"] = image->string();
    m["image_sha256"] = std::filesystem::is_regular_file(*image) ? json(sha256_file(*image)) : json(nullptr);
    m["offset"] = opts.offset;
  }
  return m;
}

json empty_report(std::string_view command, const std::optional<std::filesystem::path>& image, const Options& opts) {
  return {{"meta", meta(command, image, opts)},
          {"summary", json::object()},
          {"files", json::array()},
          {"audit", nullptr},
          {"simulation", nullptr}};
}

// Runs body(); library exceptions become an exit code and a diagnostic.
template <typename F>
CommandResult guarded(CommandResult result, F&& body) {
  try {
    body(result);
  } catch (const FormatError& e) {
    result.exit_code = kUnrecognizedVolume;
    result.diagnostics.push_back(std::string("error: ") + e.what());
  } catch (const forge::ForgeError& e) {
    result.exit_code = kFailure;
    result.diagnostics.push_back(std::string("error: ") + e.what());
  } catch (const std::exception& e) {
    result.exit_code = kFailure;
    result.diagnostics.push_back(std::string("error: ") + e.what());
  }
  return result;
}

std::string modality(const forge::GroundTruth& t) {
  std::string out;
  for (const auto& m : t.mutations) out += (out.empty() ? "" : "+") + m;
  return out.empty() ? "none" : out;
}

// Loads the sidecar and checks it describes this exact image.
std::optional<forge::GroundTruth> load_truth(const std::filesystem::path& image, const Options& opts,
                                             CommandResult& result) {
  if (!opts.truth) return std::nullopt;
  forge::GroundTruth truth;
  try {
    truth = forge::truth_from_json(load_json_file(*opts.truth));
  } catch (const std::exception& e) {
    result.exit_code = kOracleMismatch;
    result.diagnostics.push_back(std::string("error: unreadable sidecar: ") + e.what());
    return std::nullopt;
  }
  const auto actual = sha256_file(image);
  if (actual != truth.image_sha256) {
    result.exit_code = kOracleMismatch;
    result.diagnostics.push_back("error: sidecar describes image " + truth.image_sha256 + ", got " + actual);
    return std::nullopt;
  }
  return truth;
}

}  // namespace

nlohmann::json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

CommandResult run_scan(const std::filesystem::path& image, const Options& opts) {
  CommandResult init;
  init.report = empty_report("scan", image, opts);
  return guarded(std::move(init), [&](CommandResult& r) {
    const auto img = VolumeImage::open(image, opts.offset);
    const auto scan = scan_volume(img, {opts.fs, opts.deep, opts.jobs});
    std::uint64_t deleted = 0, dirs = 0;
    for (const auto& e : scan.entries) {
      deleted += e.deleted;
      dirs += e.directory;
    }
    r.report["meta"]["filesystem"] = std::string(to_string(scan.desc.kind));
    r.report["meta"]["deep"] = opts.deep;
    r.report["summary"] = {{"entries", scan.entries.size()},
                           {"live", scan.entries.size() - deleted},
                           {"deleted", deleted},
                           {"directories", dirs},
                           {"carved", scan.carved},
                           {"warnings", scan.warnings}};
    r.report["files"] = report::scan_files(scan);
    for (const auto& w : scan.warnings) r.diagnostics.push_back("warning: " + w);
  });
}

CommandResult run_recover(const std::filesystem::path& image, const Options& opts) {
  CommandResult init;
  init.report = empty_report("recover", image, opts);
  return guarded(std::move(init), [&](CommandResult& r) {
    const auto truth = load_truth(image, opts, r);
    if (r.exit_code != kOk) return;
    if (opts.out) {
      std::filesystem::create_directories(*opts.out);
      ensure_separate_media(image, *opts.out, opts.same_media);
      if (opts.same_media) {
        r.diagnostics.push_back(
            "warning: --same-media: recovered files may land on the clusters being recovered and destroy them");
      }
    }
    const auto img = VolumeImage::open(image, opts.offset);
    const auto rec = recover_volume(img, {opts.fs, opts.deep, opts.jobs}, opts.out);

    auto& m = r.report["meta"];
    m["filesystem"] = std::string(to_string(rec.desc.kind));
    m["deep"] = opts.deep;
    m["jobs"] = opts.jobs;
    m["output_dir"] = opts.out ? json(opts.out->string()) : json(nullptr);
    m["truth"] = opts.truth ? json(opts.truth->string()) : json(nullptr);
    m["modality"] = truth ? json(modality(*truth)) : json(nullptr);

    auto files = report::recovery_files(rec, truth ? &*truth : nullptr);
    r.report["summary"] = report::recovery_summary(files, truth.has_value());
    r.report["summary"]["recovered"] = rec.files.size();
    r.report["summary"]["errors"] = rec.errors;
    r.report["files"] = std::move(files);
    for (const auto& w : rec.warnings) r.diagnostics.push_back("warning: " + w);
    for (const auto& e : rec.errors) r.diagnostics.push_back("error: " + e);
    if (rec.files.empty()) {
      r.exit_code = kNothingRecovered;
      r.diagnostics.push_back("nothing recovered");
    }
  });
}

CommandResult run_audit(const std::filesystem::path& image, const Options& opts) {
  CommandResult init;
  init.report = empty_report("audit", image, opts);
  return guarded(std::move(init), [&](CommandResult& r) {
    if (!opts.truth) {
      r.exit_code = kOracleMismatch;
      r.diagnostics.push_back("error: audit needs a ground-truth sidecar");
      return;
    }
    const auto truth = load_truth(image, opts, r);
    if (!truth) return;
    const auto img = VolumeImage::open(image, opts.offset);
    const auto desc = detect(img, opts.fs);
    const auto audit = audit_against_truth(img, desc, *truth);
    r.report["meta"]["filesystem"] = std::string(to_string(desc.kind));
    r.report["meta"]["truth"] = opts.truth->string();
    r.report["meta"]["modality"] = modality(*truth);
    auto section = report::audit_section(audit);
    r.report["summary"] = {{"files", audit.rows.size()},
                           {"recoverable", section["recoverable"]},
                           {"partial", section["partial"]},
                           {"sanitized", section["sanitized"]},
                           {"recoverable_bytes", audit.recoverable_bytes}};
    r.report["audit"] = std::move(section);
  });
}

CommandResult run_forge(const nlohmann::json& corpus, const std::filesystem::path& image_out,
                        const std::optional<std::filesystem::path>& sidecar_out, const Options& opts) {
  CommandResult init;
  init.report = empty_report("forge", std::nullopt, opts);
  return guarded(std::move(init), [&](CommandResult& r) {
    forge::CorpusSpec spec;
    try {
      if (corpus.value("preset", std::string{}) == "table1") {
        spec = forge::table1_corpus(forge::fs_kind_from_string(corpus.at("filesystem").get<std::string>()));
      } else if (corpus.contains("preset")) {
        throw forge::ForgeError("unknown preset");
      } else {
        spec = forge::corpus_from_json(corpus);
      }
    } catch (const std::exception& e) {
      r.exit_code = kBadConfig;
      r.diagnostics.push_back(std::string("error: bad corpus: ") + e.what());
      return;
    }
    if (opts.seed) {
      for (auto& f : spec.files) f.seed += *opts.seed;
    }
    auto img = forge::ForgedImage::build(spec);
    if (corpus.contains("mutations")) forge::apply_mutations(img, corpus.at("mutations"));
    const auto sidecar = sidecar_out.value_or(std::filesystem::path(image_out.string() + ".truth.json"));
    img.save(image_out, sidecar);
    const auto truth = img.truth();

    r.report["meta"]["image"] = image_out.string();
    r.report["meta"]["image_sha256"] = truth.image_sha256;
    r.report["meta"]["sidecar"] = sidecar.string();
    r.report["meta"]["filesystem"] = std::string(to_string(truth.kind));
    r.report["meta"]["modality"] = modality(truth);
    std::map<std::string, std::uint64_t> states;
    json rows = json::array();
    for (const auto& f : truth.files) {
      ++states[std::string(forge::to_string(f.state))];
      rows.push_back({{"name", f.name},
                      {"directory", f.directory},
                      {"class", std::string(to_string(f.file_class))},
                      {"size", f.size},
                      {"state", std::string(forge::to_string(f.state))},
                      {"resident", f.resident},
                      {"entry_offset", f.entry_offset},
                      {"sha256", f.sha256}});
    }
    r.report["summary"] = {{"files", truth.files.size()},
                           {"volume_bytes", truth.volume_bytes},
                           {"cluster_size", truth.cluster_size}};
    for (const auto& [s, n] : states) r.report["summary"][s] = n;
    r.report["files"] = std::move(rows);
  });
}

namespace {

ftl::FtlConfig ftl_config_from_json(const nlohmann::json& c) {
  ftl::FtlConfig cfg;
  if (c.contains("geometry")) {
    const auto& g = c.at("geometry");
    auto& o = cfg.geometry;
    o.blocks = g.value("blocks", o.blocks);
    o.pages_per_block = g.value("pages_per_block", o.pages_per_block);
    o.page_size = g.value("page_size", o.page_size);
    o.reserve_blocks = g.value("reserve_blocks", o.reserve_blocks);
    o.endurance = g.value("endurance", o.endurance);
    o.logical_pages = g.value("logical_pages", o.logical_pages);
  }
  if (c.contains("gc")) {
    cfg.gc_enabled = c.at("gc").value("enabled", cfg.gc_enabled);
    cfg.gc_threshold = c.at("gc").value("threshold", cfg.gc_threshold);
  }
  cfg.seed = c.value("seed", std::uint64_t{0});
  cfg.geometry.validate();
  return cfg;
}

json block_rows(const ftl::FtlState& st) {
  json rows = json::array();
  for (std::uint32_t b = 0; b < st.geometry().blocks; ++b) {
    const auto& blk = st.block(b);
    rows.push_back({{"block", b},
                    {"erase_count", blk.erase_count},
                    {"retired", blk.retired},
                    {"reserve", blk.in_reserve},
                    {"replacement", blk.replacement ? json(*blk.replacement) : json(nullptr)},
                    {"free", st.free_pages_in(b)},
                    {"valid", st.valid_pages_in(b)},
                    {"stale", st.stale_pages_in(b)}});
  }
  return rows;
}

}  // namespace

CommandResult run_simulate(const nlohmann::json& config, const std::filesystem::path& base_dir, const Options& opts) {
  CommandResult init;
  init.report = empty_report("simulate", std::nullopt, opts);
  return guarded(std::move(init), [&](CommandResult& r) {
    ftl::FtlConfig cfg;
    std::string experiment;
    nlohmann::json params;
    try {
      if (!config.is_object()) throw Error("config must be an object");
      cfg = ftl_config_from_json(config);
      if (opts.seed) cfg.seed = *opts.seed;
      experiment = config.at("experiment").get<std::string>();
      params = config.value(experiment, nlohmann::json::object());
      if (experiment != "cycle" && experiment != "overwrite" && experiment != "retirement" &&
          experiment != "random" && experiment != "trace") {
        throw Error("unknown experiment '" + experiment + "'");
      }
      if (experiment == "retirement" && !cfg.gc_enabled) throw Error("retirement needs gc.enabled");
      if (experiment == "trace" && !params.contains("file")) throw Error("trace experiment needs trace.file");
      ftl::FtlState probe(cfg);
    } catch (const std::exception& e) {
      r.exit_code = kBadConfig;
      r.diagnostics.push_back(std::string("error: bad config: ") + e.what());
      return;
    }

    ftl::FtlState st(cfg);
    std::mt19937_64 rng(cfg.seed);
    std::vector<ftl::HistoryItem> history;
    json sim = {{"experiment", experiment},
                {"seed", cfg.seed},
                {"gc_enabled", cfg.gc_enabled},
                {"gc_threshold", cfg.gc_threshold},
                {"geometry", report::geometry_json(cfg)}};
    json summary = {{"experiment", experiment}};
    const auto page = cfg.geometry.page_size;

    if (experiment == "cycle") {
      const auto n = params.value("payloads", 16u);
      const auto iterations = params.value("iterations", 5u);
      std::vector<Bytes> payloads;
      for (std::uint32_t i = 0; i < n; ++i) {
        payloads.push_back(ftl::random_payload(rng, page));
        history.push_back({i, payloads.back()});
      }
      const auto cycle = ftl::run_cycle_experiment(st, payloads, iterations, params.value("force_gc", false));
      sim["iterations"] = report::cycle_rows(cycle);
      sim["ended_early"] = cycle.ended_early;
      sim["stop_reason"] = cycle.stop_reason;
      bool monotone = true;
      for (std::size_t i = 1; i < cycle.iterations.size(); ++i) {
        monotone = monotone && cycle.iterations[i].recoverable_bytes >= cycle.iterations[i - 1].recoverable_bytes;
      }
      summary["iterations"] = cycle.iterations.size();
      summary["non_decreasing"] = monotone;
    } else if (experiment == "overwrite") {
      const auto lpn = params.value("lpn", 0u);
      const auto k = params.value("k", 5u);
      for (std::uint32_t i = 0; i < k; ++i) {
        auto p = ftl::random_payload(rng, page);
        st.write(lpn, p);
        history.push_back({lpn, std::move(p)});
      }
      if (params.value("trim", false)) st.trim(lpn);
      const auto host = st.read(lpn);
      summary["lpn"] = lpn;
      summary["writes"] = k;
      summary["trimmed"] = params.value("trim", false);
      summary["host_read_erased"] = host == ftl::erased_page(page);
    } else if (experiment == "retirement") {
      const auto retired = ftl::drive_to_retirement(st, rng, params.value("max_writes", std::uint64_t{200000}), &history);
      summary["retired_block"] = retired ? json(*retired) : json(nullptr);
      std::vector<std::pair<std::uint32_t, std::string>> before;
      if (retired) {
        for (const auto& e : st.forensic_dump()) {
          if (e.address / cfg.geometry.pages_per_block == *retired) before.emplace_back(e.address, sha256_hex(e.payload));
        }
      }
      const auto ops = params.value("ops_after", std::uint64_t{1000});
      const auto stats = ftl::random_operations(st, rng, ops, &history);
      bool intact = retired.has_value();
      for (const auto& [addr, hash] : before) intact = intact && sha256_hex(st.page(addr).payload) == hash;
      summary["ops_after"] = ops;
      summary["rejected_ops"] = stats.rejected;
      summary["retired_intact"] = intact;
    } else if (experiment == "random") {
      const auto steps = params.value("steps", std::uint64_t{1000});
      std::uint64_t violations = 0;
      std::string first_violation;
      const auto stats = ftl::random_operations(st, rng, steps, &history, [&](const ftl::FtlState& s, std::uint64_t) {
        try {
          s.check_invariants();
        } catch (const ftl::FtlError& e) {
          if (violations++ == 0) first_violation = e.what();
        }
      });
      sim["stats"] = {{"writes", stats.writes},
                      {"trims", stats.trims},
                      {"reads", stats.reads},
                      {"collections", stats.collections},
                      {"rejected", stats.rejected}};
      summary["steps"] = steps;
      summary["invariant_violations"] = violations;
      if (violations) r.diagnostics.push_back("error: invariant violated: " + first_violation);
      if (violations) r.exit_code = kFailure;
    } else {
      auto path = std::filesystem::path(params.at("file").get<std::string>());
      if (path.is_relative()) path = base_dir / path;
      std::ifstream in(path);
      if (!in) throw Error("cannot open trace " + path.string());
      const auto ops = ftl::parse_trace(in);
      for (const auto& op : ops) {
        if (op.kind == ftl::TraceOp::Kind::Write) history.push_back({op.lpn, op.payload});
      }
      ftl::replay(st, ops);
      summary["operations"] = ops.size();
    }

    const auto dump = st.forensic_dump();
    const auto rem = ftl::remanence_audit(dump, history);
    const auto counts = st.counts();
    summary["recoverable_bytes"] = rem.recoverable_deleted_bytes;
    summary["live_copies"] = rem.live_copies;
    summary["stale_copies"] = rem.stale_copies;
    summary["retired_copies"] = rem.retired_copies;
    summary["gc_runs"] = st.gc_runs();
    summary["read_only"] = st.read_only();
    summary["state_hash"] = st.state_hash();
    sim["pages"] = {{"free", counts.free}, {"valid", counts.valid}, {"stale", counts.stale}};
    sim["blocks"] = block_rows(st);

    if (config.contains("dump_out")) {
      auto path = std::filesystem::path(config.at("dump_out").get<std::string>());
      if (path.is_relative()) path = base_dir / path;
      std::ofstream(path) << ftl::format_dump(dump);
      sim["dump"] = path.string();
    }
    r.report["meta"]["experiment"] = experiment;
    r.report["summary"] = std::move(summary);
    r.report["audit"] = report::remanence_section(rem, dump);
    r.report["simulation"] = std::move(sim);
  });
}

int emit(const CommandResult& result, const std::optional<std::string>& json_out, std::ostream& out,
         std::ostream& err) {
  for (const auto& d : result.diagnostics) err << d << "\n";
  if (json_out && *json_out == "-") {
    out << result.report.dump(2) << "\n";
  } else {
    out << report::render_text(result.report);
    if (json_out) {
      std::ofstream f(*json_out);
      if (!f) {
        err << "error: cannot write " << *json_out << "\n";
        return kFailure;
      }
      f << result.report.dump(2) << "\n";
    }
  }
  return result.exit_code;
}

}  // namespace remnant::cli
