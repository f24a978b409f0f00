#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <random>

#include "remnant/common.hpp"

namespace remnant::ftl {

class FtlError : public Error {
 public:
  using Error::Error;
};

inline constexpr std::uint8_t kErasedByte = 0xFF;

struct FlashGeometry {
  std::uint32_t blocks = 8;
  std::uint32_t pages_per_block = 32;
  std::uint32_t page_size = 2048;
  std::uint32_t reserve_blocks = 1;
  std::uint32_t endurance = 10;
  /// 0 derives the logical capacity: active blocks minus two, in pages.
  std::uint32_t logical_pages = 0;

  std::uint32_t total_pages() const { return blocks * pages_per_block; }
  std::uint32_t active_blocks() const { return blocks - reserve_blocks; }
  std::uint32_t logical_capacity() const;
  void validate() const;
};

struct FtlConfig {
  FlashGeometry geometry;
  bool gc_enabled = true;
  /// GC runs when free pages fall below this fraction of all physical pages.
  double gc_threshold = 0.125;
  std::uint64_t seed = 0;
};

enum class PageState { Free, Valid, Stale };
std::string_view to_string(PageState s);

struct PhysicalPage {
  PageState state = PageState::Free;
  Bytes payload;  // erased pattern while free
  std::optional<std::uint32_t> last_lpn;
  std::uint64_t timestamp = 0;
};

struct BlockState {
  std::uint32_t erase_count = 0;
  bool retired = false;
  bool in_reserve = false;
  std::optional<std::uint32_t> replacement;
};

class FtlState;

/// Picks the block that receives the next page program.
class AllocationPolicy {
 public:
  virtual ~AllocationPolicy() = default;
  virtual std::optional<std::uint32_t> choose_block(const FtlState& state,
                                                    std::optional<std::uint32_t> exclude) const = 0;
};

/// Lowest erase count among blocks with a free page; ties go to the lowest index.
class GreedyMinEraseCount : public AllocationPolicy {
 public:
  std::optional<std::uint32_t> choose_block(const FtlState& state,
                                            std::optional<std::uint32_t> exclude) const override;
};

struct DumpEntry {
  std::uint32_t address = 0;
  PageState state = PageState::Free;
  bool retired = false;
  Bytes payload;
  std::optional<std::uint32_t> lpn;
  std::uint64_t timestamp = 0;

  /// free | valid | stale | retired
  std::string tag() const;
};

struct PageCounts {
  std::uint32_t free = 0;
  std::uint32_t valid = 0;
  std::uint32_t stale = 0;
};

// Page-mapped flash translation layer. Writes are out-of-place; a
// superseded or trimmed page keeps its payload until garbage collection
// erases its block. Retired blocks are never erased again.
class FtlState {
 public:
  explicit FtlState(FtlConfig config = {}, std::shared_ptr<const AllocationPolicy> policy = nullptr);

  const FtlConfig& config() const { return config_; }
  const FlashGeometry& geometry() const { return config_.geometry; }

  void write(std::uint32_t lpn, ByteView data);
  Bytes read(std::uint32_t lpn) const;
  void trim(std::uint32_t lpn);
  /// One collection pass. Returns false when there was nothing to collect.
  bool garbage_collect();
  void retire_block(std::uint32_t block);
  std::vector<DumpEntry> forensic_dump() const;

  const PhysicalPage& page(std::uint32_t address) const { return pages_.at(address); }
  const BlockState& block(std::uint32_t index) const { return blocks_.at(index); }
  std::optional<std::uint32_t> mapping(std::uint32_t lpn) const;
  std::vector<std::uint32_t> reserve_pool() const { return reserve_; }

  PageCounts counts() const;
  std::uint32_t free_pages_in(std::uint32_t block) const;
  std::uint32_t stale_pages_in(std::uint32_t block) const;
  std::uint32_t valid_pages_in(std::uint32_t block) const;
  bool allocatable(std::uint32_t block) const;
  bool read_only() const { return read_only_; }
  std::uint64_t operation_counter() const { return clock_; }
  std::uint64_t gc_runs() const { return gc_runs_; }

  /// Throws FtlError describing the first violated invariant.
  void check_invariants() const;
  std::string state_hash() const;

 private:
  std::uint32_t program(std::uint32_t block, std::uint32_t lpn, ByteView data);
  std::uint32_t gc_threshold_pages() const;
  void maybe_collect();
  std::optional<std::uint32_t> choose_victim() const;
  std::uint32_t free_pages_outside(std::uint32_t block) const;

  FtlConfig config_;
  std::shared_ptr<const AllocationPolicy> policy_;
  std::vector<PhysicalPage> pages_;
  std::vector<BlockState> blocks_;
  std::vector<std::optional<std::uint32_t>> map_;
  std::vector<std::uint32_t> reserve_;
  std::uint64_t clock_ = 0;
  std::uint64_t gc_runs_ = 0;
  bool read_only_ = false;
};

Bytes erased_page(std::uint32_t page_size);

struct HistoryItem {
  std::uint32_t lpn = 0;
  Bytes payload;
};

struct CopyRecord {
  std::uint32_t address = 0;
  std::string classification;  // live | stale | retired
};

struct PayloadCopies {
  std::uint32_t lpn = 0;
  std::string payload_sha256;
  std::uint32_t live = 0;
  std::uint32_t stale = 0;
  std::uint32_t retired = 0;
  std::vector<CopyRecord> copies;

  std::uint32_t total() const { return live + stale + retired; }
};

struct RemanenceReport {
  std::vector<PayloadCopies> payloads;  // one per distinct historical payload
  std::uint64_t recoverable_deleted_bytes = 0;
  std::uint32_t live_copies = 0;
  std::uint32_t stale_copies = 0;
  std::uint32_t retired_copies = 0;
};

/// For every distinct payload in `history`, finds its copies in the dump.
RemanenceReport remanence_audit(std::span<const DumpEntry> dump, std::span<const HistoryItem> history);

struct CycleIteration {
  std::uint32_t iteration = 0;
  std::uint64_t recoverable_bytes = 0;
  std::uint32_t distinct_copies = 0;
  double byte_identical_fraction = 0.0;
  std::uint32_t live_copies = 0;
  std::uint64_t gc_runs = 0;
};

struct CycleResult {
  std::vector<CycleIteration> iterations;
  bool ended_early = false;
  std::string stop_reason;
};

// Same-media delete/recover loop: write the payload set, trim it, then per
// iteration copy the newest logically-deleted copy of every payload back as
// a fresh write ("recovery onto the same device"), measure, and trim again.
// `force_gc` runs one collection pass right after each trim.
CycleResult run_cycle_experiment(FtlState& state, std::span<const Bytes> payloads,
                                 std::uint32_t iterations, bool force_gc = false);

struct RandomOpStats {
  std::uint64_t writes = 0;
  std::uint64_t trims = 0;
  std::uint64_t reads = 0;
  std::uint64_t collections = 0;
  std::uint64_t rejected = 0;  // device full / read-only
};

using StepHook = std::function<void(const FtlState&, std::uint64_t step)>;

/// Uniformly random mix of writes, trims, reads and explicit GC passes.
RandomOpStats random_operations(FtlState& state, std::mt19937_64& rng, std::uint64_t steps,
                                std::vector<HistoryItem>* history = nullptr, const StepHook& hook = {});

Bytes random_payload(std::mt19937_64& rng, std::uint32_t size);

/// Rewrites a small working set (GC must be enabled) until some block is
/// retired. Returns that block, or nullopt after `max_writes`.
std::optional<std::uint32_t> drive_to_retirement(FtlState& state, std::mt19937_64& rng, std::uint64_t max_writes,
                                                 std::vector<HistoryItem>* history = nullptr);

// Line-oriented trace format:
//   write <lpn> <hex payload>
//   trim <lpn>
//   read <lpn>
//   gc
struct TraceOp {
  enum class Kind { Write, Trim, Read, Gc } kind = Kind::Gc;
  std::uint32_t lpn = 0;
  Bytes payload;

  bool operator==(const TraceOp&) const = default;
};

std::string format_trace(std::span<const TraceOp> ops);
std::vector<TraceOp> parse_trace(std::istream& in);
void replay(FtlState& state, std::span<const TraceOp> ops);

/// One line per physical page: address, tag, lpn or '-', timestamp, payload sha256.
std::string format_dump(std::span<const DumpEntry> dump);

}  // namespace remnant::ftl
