#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "remnant/commands.hpp"

namespace py = pybind11;
namespace cli = remnant::cli;

namespace {

using MaybePath = std::optional<std::string>;

py::tuple result(const cli::CommandResult& r) {
  return py::make_tuple(r.exit_code, r.report.dump(), r.diagnostics);
}

cli::Options options(const std::string& fs, bool deep, std::uint64_t offset, unsigned jobs) {
  cli::Options o;
  o.fs = remnant::fs_choice_from_string(fs);
  o.deep = deep;
  o.offset = offset;
  o.jobs = jobs;
  return o;
}

}  // namespace

PYBIND11_MODULE(_remnant, m) {
  m.doc() = "Deleted-file recovery for FAT/NTFS images and a flash remanence simulator";
  m.attr("__version__") = std::string(remnant::report::kToolVersion);

  py::register_exception<remnant::Error>(m, "RemnantError");

  m.def(
      "scan",
      [](const std::string& image, const std::string& fs, bool deep, std::uint64_t offset, unsigned jobs) {
        cli::CommandResult r;
        {
          py::gil_scoped_release nogil;
          r = cli::run_scan(image, options(fs, deep, offset, jobs));
        }
        return result(r);
      },
      py::arg("image"), py::arg("fs") = "auto", py::arg("deep") = false, py::arg("offset") = 0, py::arg("jobs") = 1);

  m.def(
      "recover",
      [](const std::string& image, MaybePath out, MaybePath truth, const std::string& fs, bool deep,
         std::uint64_t offset, unsigned jobs, bool same_media) {
        auto o = options(fs, deep, offset, jobs);
        if (out) o.out = *out;
        if (truth) o.truth = *truth;
        o.same_media = same_media;
        cli::CommandResult r;
        {
          py::gil_scoped_release nogil;
          r = cli::run_recover(image, o);
        }
        return result(r);
      },
      py::arg("image"), py::arg("out") = py::none(), py::arg("truth") = py::none(), py::arg("fs") = "auto",
      py::arg("deep") = false, py::arg("offset") = 0, py::arg("jobs") = 1, py::arg("same_media") = false);

  m.def(
      "audit",
      [](const std::string& image, const std::string& truth, const std::string& fs, std::uint64_t offset) {
        auto o = options(fs, false, offset, 1);
        o.truth = truth;
        return result(cli::run_audit(image, o));
      },
      py::arg("image"), py::arg("truth"), py::arg("fs") = "auto", py::arg("offset") = 0);

  m.def(
      "forge",
      [](const std::string& corpus_json, const std::string& image_out, MaybePath sidecar,
         std::optional<std::uint64_t> seed) {
        cli::Options o;
        o.seed = seed;
        std::optional<std::filesystem::path> side;
        if (sidecar) side = *sidecar;
        return result(cli::run_forge(nlohmann::json::parse(corpus_json), image_out, side, o));
      },
      py::arg("corpus_json"), py::arg("image_out"), py::arg("sidecar") = py::none(), py::arg("seed") = py::none());

  m.def(
      "simulate",
      [](const std::string& config_json, const std::string& base_dir, std::optional<std::uint64_t> seed) {
        cli::Options o;
        o.seed = seed;
        return result(cli::run_simulate(nlohmann::json::parse(config_json), base_dir, o));
      },
      py::arg("config_json"), py::arg("base_dir") = ".", py::arg("seed") = py::none());

  m.def("render_text", [](const std::string& report_json) {
    return remnant::report::render_text(remnant::report::json::parse(report_json));
  });

  m.def(
      "decode_data_runs",
      [](const py::bytes& raw) {
        const std::string s = raw;
        const remnant::Bytes b(s.begin(), s.end());
        std::vector<std::pair<std::uint64_t, std::optional<std::uint64_t>>> out;
        for (const auto& r : remnant::ntfs::decode_data_runs(b).runs) out.emplace_back(r.length, r.lcn);
        return out;
      },
      "Decode an NTFS mapping-pairs array into (length, lcn or None) pairs.");

  m.def(
      "encode_data_runs",
      [](const std::vector<std::pair<std::uint64_t, std::optional<std::uint64_t>>>& runs) {
        remnant::ntfs::RunList rl;
        for (const auto& [len, lcn] : runs) rl.runs.push_back({len, lcn});
        const auto b = remnant::forge::encode_data_runs(rl);
        return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
      },
      "Encode (length, lcn or None) pairs with minimal field widths.");

  m.def("sha256_file", [](const std::string& path) { return remnant::sha256_file(path); });
}
