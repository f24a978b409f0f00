#pragma once

#include "remnant/forge.hpp"

// Sanitization audit: how much of each ground-truth file still sits on the
// media, independent of whether any metadata still points at it.
namespace remnant {

enum class Verdict { Sanitized, Partial, Recoverable };
std::string_view to_string(Verdict v);

struct AuditRow {
  std::string name;
  FileClass file_class = FileClass::Unknown;
  forge::FileState state = forge::FileState::Live;
  std::uint64_t size = 0;
  std::uint64_t recoverable_bytes = 0;  // bytes whose original content is still in place
  std::uint64_t stored_bytes = 0;       // bytes the file occupies on media (sparse ranges excluded)
  Verdict verdict = Verdict::Sanitized;
};

struct AuditResult {
  std::vector<AuditRow> rows;
  std::uint64_t recoverable_bytes = 0;
};

/// Compares every truth file, cluster by cluster, with what the image holds.
/// Resident NTFS payloads are searched for inside their (fixed-up) MFT record.
AuditResult audit_against_truth(const VolumeImage& img, const VolumeDescriptor& desc,
                                const forge::GroundTruth& truth);

}  // namespace remnant
