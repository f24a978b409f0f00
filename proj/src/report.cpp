#include "remnant/report.hpp"

#include <map>
#include <sstream>

namespace remnant::report {

std::string percent(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return "0.0";
  // tenths of a percent, rounded half up
  const unsigned __int128 tenths = (static_cast<unsigned __int128>(num) * 2000 + den) / (2 * static_cast<unsigned __int128>(den));
  const auto t = static_cast<std::uint64_t>(tenths);
  return std::to_string(t / 10) + "." + std::to_string(t % 10);
}

namespace {

json extents_json(const std::vector<Extent>& extents) {
  json out = json::array();
  for (const auto& e : extents) {
    json o = {{"first", e.first}, {"count", e.count}};
    if (e.sparse) o["sparse"] = true;
    out.push_back(std::move(o));
  }
  return out;
}

}  // namespace

json scan_files(const ScanResult& scan) {
  json rows = json::array();
  for (const auto& e : scan.entries) {
    rows.push_back({{"entry_id", e.entry_id},
                    {"path", e.path},
                    {"name", e.name},
                    {"deleted", e.deleted},
                    {"directory", e.directory},
                    {"orphan", e.orphan},
                    {"size", e.size},
                    {"created", e.created},
                    {"modified", e.modified},
                    {"confidence", std::string(to_string(e.confidence))},
                    {"entry_offset", e.entry_offset}});
  }
  return rows;
}

json recovery_files(const RecoveryResult& rec, const forge::GroundTruth* truth) {
  json rows = json::array();
  std::map<std::uint64_t, const forge::FileTruth*> by_offset;
  if (truth != nullptr) {
    for (const auto& f : truth->files) by_offset.emplace(f.entry_offset, &f);
  }
  std::map<std::uint64_t, bool> matched;
  for (const auto& f : rec.files) {
    json row = {{"entry_id", f.entry_id},
                {"name", f.name},
                {"class", std::string(to_string(f.file_class))},
                {"size", f.expected_size},
                {"length", f.length},
                {"sha256", f.sha256},
                {"confidence", std::string(to_string(f.confidence))},
                {"flags", f.flags},
                {"clusters", extents_json(f.clusters)},
                {"entry_offset", f.entry_offset},
                {"output", f.output_path ? json(f.output_path->string()) : json(nullptr)}};
    if (truth == nullptr) {
      row["attempted"] = true;
      row["listed"] = true;
      row["byte_identical"] = nullptr;
      row["truth_name"] = nullptr;
    } else {
      const auto it = by_offset.find(f.entry_offset);
      const bool counted = it != by_offset.end() && it->second->state != forge::FileState::Live &&
                           !matched.contains(f.entry_offset);
      row["attempted"] = counted;
      row["listed"] = counted;
      if (counted) {
        matched[f.entry_offset] = true;
        row["class"] = std::string(to_string(it->second->file_class));
        row["byte_identical"] = f.sha256 == it->second->sha256;
        row["truth_name"] = it->second->name;
      } else {
        row["byte_identical"] = nullptr;
        row["truth_name"] = nullptr;
      }
    }
    rows.push_back(std::move(row));
  }
  if (truth != nullptr) {
    for (const auto& t : truth->files) {
      if (t.state == forge::FileState::Live || matched.contains(t.entry_offset)) continue;
      rows.push_back({{"entry_id", nullptr},
                      {"name", t.name},
                      {"class", std::string(to_string(t.file_class))},
                      {"size", t.size},
                      {"length", nullptr},
                      {"sha256", nullptr},
                      {"confidence", nullptr},
                      {"flags", json::array()},
                      {"clusters", json::array()},
                      {"entry_offset", t.entry_offset},
                      {"output", nullptr},
                      {"attempted", true},
                      {"listed", false},
                      {"byte_identical", false},
                      {"truth_name", t.name}});
    }
  }
  return rows;
}

json recovery_summary(const json& files, bool with_truth) {
  struct Tally {
    std::uint64_t attempted = 0, listed = 0, identical = 0;
  };
  std::map<std::string, Tally> by_class;
  for (auto c : kTableClasses) by_class[std::string(to_string(c))];
  Tally total;
  for (const auto& row : files) {
    if (!row.at("attempted").get<bool>()) continue;
    auto& t = by_class[row.at("class").get<std::string>()];
    const bool listed = row.at("listed").get<bool>();
    const bool identical = row.at("byte_identical").is_boolean() && row.at("byte_identical").get<bool>();
    for (Tally* x : {&t, &total}) {
      ++x->attempted;
      x->listed += listed;
      x->identical += identical;
    }
  }
  auto render = [&](const std::string& cls, const Tally& t) {
    json row = {{"class", cls}, {"attempted", t.attempted}, {"listed", t.listed}};
    row["listed_percent"] = t.attempted ? json(percent(t.listed, t.attempted)) : json(nullptr);
    if (with_truth) {
      row["byte_identical"] = t.identical;
      row["percent"] = t.attempted ? json(percent(t.identical, t.attempted)) : json(nullptr);
    } else {
      row["byte_identical"] = nullptr;
      row["percent"] = nullptr;
    }
    return row;
  };
  json classes = json::array();
  // Table rows first in their fixed order, then anything else (unknown).
  for (auto c : kTableClasses) classes.push_back(render(std::string(to_string(c)), by_class[std::string(to_string(c))]));
  for (const auto& [cls, t] : by_class) {
    if (file_class_from_string(cls) == FileClass::Unknown) classes.push_back(render(cls, t));
  }
  return {{"classes", classes}, {"totals", render("total", total)}};
}

json audit_section(const AuditResult& audit) {
  std::map<std::string, std::uint64_t> counts = {{"RECOVERABLE", 0}, {"PARTIAL", 0}, {"SANITIZED", 0}};
  json rows = json::array();
  for (const auto& r : audit.rows) {
    ++counts[std::string(to_string(r.verdict))];
    rows.push_back({{"name", r.name},
                    {"class", std::string(to_string(r.file_class))},
                    {"state", std::string(forge::to_string(r.state))},
                    {"size", r.size},
                    {"stored_bytes", r.stored_bytes},
                    {"recoverable_bytes", r.recoverable_bytes},
                    {"verdict", std::string(to_string(r.verdict))}});
  }
  return {{"recoverable_bytes", audit.recoverable_bytes},
          {"recoverable", counts["RECOVERABLE"]},
          {"partial", counts["PARTIAL"]},
          {"sanitized", counts["SANITIZED"]},
          {"files", rows}};
}

json remanence_section(const ftl::RemanenceReport& rem, std::span<const ftl::DumpEntry> dump) {
  std::map<std::uint32_t, const ftl::DumpEntry*> by_addr;
  for (const auto& e : dump) by_addr[e.address] = &e;
  json payloads = json::array();
  json copies = json::array();
  std::map<std::uint32_t, std::array<std::uint32_t, 3>> per_lpn;  // live, stale, retired
  for (const auto& pc : rem.payloads) {
    payloads.push_back({{"lpn", pc.lpn},
                        {"sha256", pc.payload_sha256},
                        {"live", pc.live},
                        {"stale", pc.stale},
                        {"retired", pc.retired},
                        {"copies", pc.total()}});
    auto& agg = per_lpn[pc.lpn];
    agg[0] += pc.live;
    agg[1] += pc.stale;
    agg[2] += pc.retired;
    for (const auto& c : pc.copies) {
      const auto* e = by_addr.at(c.address);
      copies.push_back({{"address", c.address},
                        {"lpn", pc.lpn},
                        {"tag", c.classification},
                        {"timestamp", e->timestamp},
                        {"sha256", pc.payload_sha256}});
    }
  }
  json lpns = json::array();
  for (const auto& [lpn, a] : per_lpn) {
    lpns.push_back({{"lpn", lpn}, {"live", a[0]}, {"stale", a[1]}, {"retired", a[2]}, {"copies", a[0] + a[1] + a[2]}});
  }
  return {{"recoverable_bytes", rem.recoverable_deleted_bytes},
          {"live_copies", rem.live_copies},
          {"stale_copies", rem.stale_copies},
          {"retired_copies", rem.retired_copies},
          {"lpns", lpns},
          {"payloads", payloads},
          {"copies", copies}};
}

json cycle_rows(const ftl::CycleResult& cycle) {
  json rows = json::array();
  for (const auto& it : cycle.iterations) {
    rows.push_back({{"iteration", it.iteration},
                    {"recoverable_bytes", it.recoverable_bytes},
                    {"distinct_copies", it.distinct_copies},
                    {"live_copies", it.live_copies},
                    {"payloads_present", percent(static_cast<std::uint64_t>(it.byte_identical_fraction * 1e6 + 0.5),
                                                 1000000)},
                    {"gc_runs", it.gc_runs}});
  }
  return rows;
}

json geometry_json(const ftl::FtlConfig& c) {
  const auto& g = c.geometry;
  return {{"blocks", g.blocks},
          {"pages_per_block", g.pages_per_block},
          {"page_size", g.page_size},
          {"reserve_blocks", g.reserve_blocks},
          {"endurance", g.endurance},
          {"logical_pages", g.logical_capacity()}};
}

// ---- text rendering ------------------------------------------------------

namespace {

constexpr std::string_view kSep = " | ";

std::string cell(const json& v) {
  if (v.is_null()) return "-";
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "yes" : "no";
  if (v.is_array()) {
    std::string out;
    for (const auto& item : v) {
      if (!out.empty()) out += ",";
      if (item.is_object()) {
        std::string part;
        for (const auto& [k, x] : item.items()) {
          if (!part.empty()) part += ":";
          part += cell(x);
        }
        out += part;
      } else {
        out += cell(item);
      }
    }
    return out.empty() ? "-" : out;
  }
  if (v.is_object()) return v.dump();
  return v.dump();
}

// Scalars of an object, nested objects flattened with dotted keys; arrays of
// objects are collected separately as tables.
void flatten(const json& obj, const std::string& prefix, json& scalars,
             std::vector<std::pair<std::string, const json*>>& tables, const std::string& section) {
  for (const auto& [k, v] : obj.items()) {
    const std::string key = prefix.empty() ? k : prefix + "." + k;
    if (v.is_object()) {
      flatten(v, key, scalars, tables, section);
    } else if (v.is_array() && !v.empty() && v.front().is_object()) {
      tables.emplace_back(section + "." + key, &v);
    } else {
      scalars[key] = cell(v);
    }
  }
}

json table_rows(const json& arr) {
  json rows = json::array();
  for (const auto& r : arr) {
    json row = json::object();
    for (const auto& [k, v] : r.items()) {
      if (v.is_object()) {
        for (const auto& [k2, v2] : v.items()) row[k + "." + k2] = cell(v2);
      } else {
        row[k] = cell(v);
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

constexpr std::array<std::string_view, 5> kSections = {"meta", "summary", "files", "audit", "simulation"};

}  // namespace

json text_facts(const json& report) {
  json facts = json::object();
  for (auto name : kSections) {
    const std::string s(name);
    if (!report.contains(s) || report.at(s).is_null()) continue;
    const auto& sec = report.at(s);
    if (sec.is_array()) {
      facts[s] = table_rows(sec);
      continue;
    }
    json scalars = json::object();
    std::vector<std::pair<std::string, const json*>> tables;
    flatten(sec, "", scalars, tables, s);
    facts[s] = scalars;
    for (const auto& [tname, arr] : tables) facts[tname] = table_rows(*arr);
  }
  return facts;
}

std::string render_text(const json& report) {
  const json facts = text_facts(report);
  std::ostringstream out;
  std::string command = "report";
  if (report.contains("meta") && report["meta"].contains("command")) command = report["meta"]["command"].get<std::string>();
  out << "# remnant " << command << "\n";
  for (const auto& [section, body] : facts.items()) {
    out << "\n[" << section << "]\n";
    if (body.is_object()) {
      if (body.empty()) out << "(empty)\n";
      for (const auto& [k, v] : body.items()) out << k << ": " << v.get<std::string>() << "\n";
      continue;
    }
    if (body.empty()) {
      out << "(none)\n";
      continue;
    }
    std::vector<std::string> cols;
    for (const auto& [k, v] : body.front().items()) cols.push_back(k);
    std::vector<std::size_t> width(cols.size());
    for (std::size_t c = 0; c < cols.size(); ++c) {
      width[c] = cols[c].size();
      for (const auto& row : body) width[c] = std::max(width[c], row.value(cols[c], std::string("-")).size());
    }
    auto line = [&](auto&& get) {
      std::string l;
      for (std::size_t c = 0; c < cols.size(); ++c) {
        std::string v = get(c);
        if (c + 1 < cols.size()) v.resize(width[c], ' ');
        l += (c ? std::string(kSep) : std::string()) + v;
      }
      out << l << "\n";
    };
    line([&](std::size_t c) { return cols[c]; });
    std::string rule;
    for (std::size_t c = 0; c < cols.size(); ++c) rule += (c ? "-+-" : "") + std::string(width[c], '-');
    out << rule << "\n";
    for (const auto& row : body) line([&](std::size_t c) { return row.value(cols[c], std::string("-")); });
  }
  return out.str();
}

namespace {

std::string rtrim(std::string s) {
  while (!s.empty() && s.back() == ' ') s.pop_back();
  return s;
}

std::vector<std::string> split_cells(const std::string& line) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const auto next = line.find(kSep, pos);
    out.push_back(rtrim(line.substr(pos, next == std::string::npos ? std::string::npos : next - pos)));
    if (next == std::string::npos) break;
    pos = next + kSep.size();
  }
  return out;
}

bool is_rule(const std::string& l) {
  return !l.empty() && l.find_first_not_of("-+") == std::string::npos;
}

}  // namespace

json parse_text(std::string_view text) {
  std::vector<std::string> lines;
  std::istringstream in{std::string(text)};
  for (std::string l; std::getline(in, l);) lines.push_back(l);

  json facts = json::object();
  std::string section;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& l = lines[i];
    if (l.empty() || l.front() == '#') continue;
    if (l.front() == '[' && l.back() == ']') {
      section = l.substr(1, l.size() - 2);
      continue;
    }
    if (section.empty()) throw Error("report text: content before any section");
    if (l == "(none)" || l == "(empty)") {
      facts[section] = l == "(none)" ? json::array() : json::object();
      continue;
    }
    if (i + 1 < lines.size() && is_rule(lines[i + 1])) {
      const auto cols = split_cells(l);
      json rows = json::array();
      for (i += 2; i < lines.size() && !lines[i].empty(); ++i) {
        const auto cells = split_cells(lines[i]);
        if (cells.size() != cols.size()) throw Error("report text: ragged row in [" + section + "]");
        json row = json::object();
        for (std::size_t c = 0; c < cols.size(); ++c) row[cols[c]] = cells[c];
        rows.push_back(std::move(row));
      }
      facts[section] = std::move(rows);
      continue;
    }
    const auto colon = l.find(": ");
    if (colon == std::string::npos) throw Error("report text: unparsable line '" + l + "'");
    facts[section][l.substr(0, colon)] = l.substr(colon + 2);
  }
  return facts;
}

}  // namespace remnant::report
