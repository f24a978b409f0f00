#include "remnant/audit.hpp"

#include <algorithm>

namespace remnant {

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::Sanitized: return "SANITIZED";
    case Verdict::Partial: return "PARTIAL";
    case Verdict::Recoverable: return "RECOVERABLE";
  }
  return "?";
}

AuditResult audit_against_truth(const VolumeImage& img, const VolumeDescriptor& desc,
                                const forge::GroundTruth& truth) {
  AuditResult out;
  const std::uint32_t cs = desc.cluster_size();
  for (const auto& f : truth.files) {
    AuditRow row;
    row.name = f.directory.empty() ? f.name : f.directory + "/" + f.name;
    row.file_class = f.file_class;
    row.state = f.state;
    row.size = f.size;
    const Bytes expected = forge::expected_content(f, cs);

    if (f.resident) {
      row.stored_bytes = expected.size();
      if (truth.mft_record_size > 0 && f.entry_offset + truth.mft_record_size <= img.size()) {
        Bytes record = img.read(f.entry_offset, truth.mft_record_size);
        ntfs::apply_fixup(record, truth.bytes_per_sector);
        if (!expected.empty() &&
            std::search(record.begin(), record.end(), expected.begin(), expected.end()) != record.end()) {
          row.recoverable_bytes = expected.size();
        }
      }
    } else {
      std::uint64_t vcn = 0;
      for (const auto& e : f.extents) {
        for (std::uint64_t i = 0; i < e.count; ++i, ++vcn) {
          const std::uint64_t start = vcn * cs;
          if (start >= expected.size()) break;
          if (e.sparse) continue;
          const std::uint64_t len = std::min<std::uint64_t>(cs, expected.size() - start);
          row.stored_bytes += len;
          const auto off = cluster_offset(desc, e.first + i);
          if (off + len > img.size()) continue;
          const Bytes have = img.read(off, len);
          if (std::equal(have.begin(), have.end(), expected.begin() + static_cast<std::ptrdiff_t>(start))) {
            row.recoverable_bytes += len;
          }
        }
      }
    }

    if (row.stored_bytes > 0 && row.recoverable_bytes == row.stored_bytes) {
      row.verdict = Verdict::Recoverable;
    } else if (row.recoverable_bytes > 0) {
      row.verdict = Verdict::Partial;
    } else {
      row.verdict = Verdict::Sanitized;
    }
    out.recoverable_bytes += row.recoverable_bytes;
    out.rows.push_back(std::move(row));
  }
  return out;
}

}  // namespace remnant
