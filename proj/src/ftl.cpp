#include "remnant/ftl.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <sstream>

namespace remnant::ftl {

std::uint32_t FlashGeometry::logical_capacity() const {
  if (logical_pages != 0) return logical_pages;
  return (active_blocks() - 2) * pages_per_block;
}

void FlashGeometry::validate() const {
  if (blocks == 0 || pages_per_block == 0 || page_size == 0 || endurance == 0) {
    throw FtlError("flash geometry fields must be positive");
  }
  if (reserve_blocks >= blocks) throw FtlError("reserve block count must be below block count");
  if (active_blocks() < 3) throw FtlError("need at least three active blocks");
  if (logical_capacity() == 0 || logical_capacity() > active_blocks() * pages_per_block) {
    throw FtlError("logical capacity exceeds active flash");
  }
}

std::string_view to_string(PageState s) {
  switch (s) {
    case PageState::Free: return "free";
    case PageState::Valid: return "valid";
    case PageState::Stale: return "stale";
  }
  return "?";
}

std::string DumpEntry::tag() const {
  if (retired && state != PageState::Free) return "retired";
  return std::string(to_string(state));
}

Bytes erased_page(std::uint32_t page_size) { return Bytes(page_size, kErasedByte); }

std::optional<std::uint32_t> GreedyMinEraseCount::choose_block(const FtlState& state,
                                                               std::optional<std::uint32_t> exclude) const {
  std::optional<std::uint32_t> best;
  for (std::uint32_t b = 0; b < state.geometry().blocks; ++b) {
    if (exclude && *exclude == b) continue;
    if (!state.allocatable(b)) continue;
    if (!best || state.block(b).erase_count < state.block(*best).erase_count) best = b;
  }
  return best;
}

FtlState::FtlState(FtlConfig config, std::shared_ptr<const AllocationPolicy> policy)
    : config_(std::move(config)), policy_(std::move(policy)) {
  config_.geometry.validate();
  if (!(config_.gc_threshold >= 0.0 && config_.gc_threshold < 1.0)) {
    throw FtlError("gc threshold must be in [0, 1)");
  }
  if (!policy_) policy_ = std::make_shared<GreedyMinEraseCount>();
  const auto& g = config_.geometry;
  pages_.resize(g.total_pages());
  for (auto& p : pages_) p.payload = erased_page(g.page_size);
  blocks_.resize(g.blocks);
  for (std::uint32_t b = g.active_blocks(); b < g.blocks; ++b) {
    blocks_[b].in_reserve = true;
    reserve_.push_back(b);
  }
  map_.resize(g.logical_capacity());
}

std::optional<std::uint32_t> FtlState::mapping(std::uint32_t lpn) const {
  if (lpn >= map_.size()) throw FtlError("logical page out of range");
  return map_[lpn];
}

std::uint32_t FtlState::free_pages_in(std::uint32_t block) const {
  const auto ppb = geometry().pages_per_block;
  std::uint32_t n = 0;
  for (std::uint32_t i = 0; i < ppb; ++i) n += pages_[block * ppb + i].state == PageState::Free;
  return n;
}

std::uint32_t FtlState::stale_pages_in(std::uint32_t block) const {
  const auto ppb = geometry().pages_per_block;
  std::uint32_t n = 0;
  for (std::uint32_t i = 0; i < ppb; ++i) n += pages_[block * ppb + i].state == PageState::Stale;
  return n;
}

std::uint32_t FtlState::valid_pages_in(std::uint32_t block) const {
  const auto ppb = geometry().pages_per_block;
  std::uint32_t n = 0;
  for (std::uint32_t i = 0; i < ppb; ++i) n += pages_[block * ppb + i].state == PageState::Valid;
  return n;
}

bool FtlState::allocatable(std::uint32_t block) const {
  const auto& b = blocks_.at(block);
  return !b.retired && !b.in_reserve && free_pages_in(block) > 0;
}

PageCounts FtlState::counts() const {
  PageCounts c;
  for (const auto& p : pages_) {
    switch (p.state) {
      case PageState::Free: ++c.free; break;
      case PageState::Valid: ++c.valid; break;
      case PageState::Stale: ++c.stale; break;
    }
  }
  return c;
}

std::uint32_t FtlState::program(std::uint32_t block, std::uint32_t lpn, ByteView data) {
  const auto ppb = geometry().pages_per_block;
  for (std::uint32_t i = 0; i < ppb; ++i) {
    auto& p = pages_[block * ppb + i];
    if (p.state != PageState::Free) continue;
    p.state = PageState::Valid;
    p.payload.assign(data.begin(), data.end());
    p.last_lpn = lpn;
    p.timestamp = ++clock_;
    return block * ppb + i;
  }
  throw FtlError("no free page in chosen block");
}

std::uint32_t FtlState::gc_threshold_pages() const {
  return static_cast<std::uint32_t>(std::ceil(config_.gc_threshold * geometry().total_pages()));
}

std::uint32_t FtlState::free_pages_outside(std::uint32_t block) const {
  std::uint32_t n = 0;
  for (std::uint32_t b = 0; b < geometry().blocks; ++b) {
    if (b == block || blocks_[b].retired || blocks_[b].in_reserve) continue;
    n += free_pages_in(b);
  }
  return n;
}

void FtlState::maybe_collect() {
  if (!config_.gc_enabled) return;
  for (std::uint32_t guard = 0; guard < geometry().blocks * 2 && !read_only_; ++guard) {
    if (free_pages_outside(geometry().blocks) >= gc_threshold_pages()) return;
    if (!garbage_collect()) return;
  }
}

void FtlState::write(std::uint32_t lpn, ByteView data) {
  if (lpn >= map_.size()) throw FtlError("logical page out of range");
  if (data.size() != geometry().page_size) throw FtlError("payload size must equal page size");
  if (read_only_) throw FtlError("device is read-only");

  auto target = policy_->choose_block(*this, std::nullopt);
  if (!target && config_.gc_enabled) {
    for (std::uint32_t guard = 0; !target && guard < geometry().blocks * 2 && !read_only_; ++guard) {
      if (!garbage_collect()) break;
      target = policy_->choose_block(*this, std::nullopt);
    }
  }
  if (!target) throw FtlError(read_only_ ? "device is read-only" : "device full");

  const auto previous = map_[lpn];
  map_[lpn] = program(*target, lpn, data);
  if (previous) pages_[*previous].state = PageState::Stale;
  maybe_collect();
}

Bytes FtlState::read(std::uint32_t lpn) const {
  if (lpn >= map_.size()) throw FtlError("logical page out of range");
  if (!map_[lpn]) return erased_page(geometry().page_size);
  return pages_[*map_[lpn]].payload;
}

void FtlState::trim(std::uint32_t lpn) {
  if (lpn >= map_.size()) throw FtlError("logical page out of range");
  if (!map_[lpn]) return;
  pages_[*map_[lpn]].state = PageState::Stale;
  map_[lpn].reset();
}

std::optional<std::uint32_t> FtlState::choose_victim() const {
  std::optional<std::uint32_t> best;
  std::uint32_t best_stale = 0;
  for (std::uint32_t b = 0; b < geometry().blocks; ++b) {
    if (blocks_[b].retired || blocks_[b].in_reserve) continue;
    const auto stale = stale_pages_in(b);
    if (stale > best_stale) {
      best = b;
      best_stale = stale;
    }
  }
  return best;
}

bool FtlState::garbage_collect() {
  if (read_only_) return false;
  const auto victim = choose_victim();
  if (!victim) return false;
  auto& blk = blocks_[*victim];
  if (blk.erase_count + 1 >= geometry().endurance) {
    // The erase that would reach the endurance limit wears the block out;
    // it is retired with its contents intact instead of being erased.
    blk.erase_count += 1;
    retire_block(*victim);
    ++gc_runs_;
    return true;
  }
  if (valid_pages_in(*victim) > free_pages_outside(*victim)) return false;

  const auto ppb = geometry().pages_per_block;
  for (std::uint32_t i = 0; i < ppb; ++i) {
    const std::uint32_t addr = *victim * ppb + i;
    if (pages_[addr].state != PageState::Valid) continue;
    const auto target = policy_->choose_block(*this, victim);
    if (!target) throw FtlError("relocation target vanished");
    const std::uint32_t lpn = *pages_[addr].last_lpn;
    map_[lpn] = program(*target, lpn, pages_[addr].payload);
    pages_[addr].state = PageState::Stale;
  }
  for (std::uint32_t i = 0; i < ppb; ++i) {
    auto& p = pages_[*victim * ppb + i];
    p.state = PageState::Free;
    p.payload = erased_page(geometry().page_size);
    p.last_lpn.reset();
    p.timestamp = 0;
  }
  blk.erase_count += 1;
  ++gc_runs_;
  return true;
}

void FtlState::retire_block(std::uint32_t block) {
  auto& blk = blocks_.at(block);
  if (blk.retired) throw FtlError("block already retired");
  if (blk.in_reserve) throw FtlError("cannot retire a reserve block");
  if (blk.erase_count < geometry().endurance) throw FtlError("block has not reached its endurance limit");
  blk.retired = true;
  if (reserve_.empty()) {
    // Nothing to remap onto: live pages stay where they are and the device
    // stops accepting writes.
    read_only_ = true;
    return;
  }
  const std::uint32_t fresh = reserve_.front();
  reserve_.erase(reserve_.begin());
  blocks_[fresh].in_reserve = false;
  blk.replacement = fresh;
  const auto ppb = geometry().pages_per_block;
  for (std::uint32_t i = 0; i < ppb; ++i) {
    const std::uint32_t addr = block * ppb + i;
    if (pages_[addr].state != PageState::Valid) continue;
    const std::uint32_t lpn = *pages_[addr].last_lpn;
    map_[lpn] = program(fresh, lpn, pages_[addr].payload);
    pages_[addr].state = PageState::Stale;
  }
}

std::vector<DumpEntry> FtlState::forensic_dump() const {
  std::vector<DumpEntry> out;
  out.reserve(pages_.size());
  const auto ppb = geometry().pages_per_block;
  for (std::uint32_t a = 0; a < pages_.size(); ++a) {
    const auto& p = pages_[a];
    out.push_back({a, p.state, blocks_[a / ppb].retired, p.payload, p.last_lpn, p.timestamp});
  }
  return out;
}

void FtlState::check_invariants() const {
  const auto& g = geometry();
  const auto c = counts();
  if (c.free + c.valid + c.stale != g.total_pages()) throw FtlError("page conservation violated");
  std::vector<int> refs(pages_.size(), 0);
  for (std::uint32_t lpn = 0; lpn < map_.size(); ++lpn) {
    if (!map_[lpn]) continue;
    const auto& p = pages_[*map_[lpn]];
    if (p.state != PageState::Valid || p.last_lpn != lpn) throw FtlError("mapping points at a non-valid page");
    ++refs[*map_[lpn]];
  }
  for (std::uint32_t a = 0; a < pages_.size(); ++a) {
    const auto& p = pages_[a];
    if (p.state == PageState::Valid && refs[a] != 1) throw FtlError("valid page not referenced exactly once");
    if (p.state == PageState::Free &&
        !std::all_of(p.payload.begin(), p.payload.end(), [](std::uint8_t b) { return b == kErasedByte; })) {
      throw FtlError("free page holds data");
    }
  }
  for (std::uint32_t b = 0; b < g.blocks; ++b) {
    const auto& blk = blocks_[b];
    if (blk.retired && blk.erase_count < g.endurance) throw FtlError("retired block below endurance limit");
    if (blk.in_reserve && free_pages_in(b) != g.pages_per_block) throw FtlError("reserve block in use");
    // Pages are programmed in order, so free pages form a suffix of the block.
    bool seen_free = false;
    for (std::uint32_t i = 0; i < g.pages_per_block; ++i) {
      const bool is_free = pages_[b * g.pages_per_block + i].state == PageState::Free;
      if (seen_free && !is_free) throw FtlError("page programmed out of order");
      seen_free = seen_free || is_free;
    }
  }
}

std::string FtlState::state_hash() const {
  Sha256 h;
  auto put = [&h](std::uint64_t v) {
    std::array<std::uint8_t, 8> b{};
    store_le<std::uint64_t>(b, 0, v);
    h.update(b);
  };
  for (const auto& p : pages_) {
    put(static_cast<std::uint64_t>(p.state));
    put(p.last_lpn ? *p.last_lpn : ~std::uint64_t{0});
    put(p.timestamp);
    h.update(p.payload);
  }
  for (const auto& b : blocks_) {
    put(b.erase_count);
    put((b.retired ? 1u : 0u) | (b.in_reserve ? 2u : 0u));
    put(b.replacement ? *b.replacement : ~std::uint64_t{0});
  }
  for (const auto& m : map_) put(m ? *m : ~std::uint64_t{0});
  for (auto r : reserve_) put(r);
  put(clock_);
  put(read_only_ ? 1 : 0);
  return h.hex_digest();
}

RemanenceReport remanence_audit(std::span<const DumpEntry> dump, std::span<const HistoryItem> history) {
  RemanenceReport report;
  std::map<std::string, std::size_t> by_hash;  // payload hash -> index in report.payloads
  std::vector<std::size_t> payload_size;
  for (const auto& item : history) {
    auto hash = sha256_hex(item.payload);
    if (by_hash.contains(hash)) continue;
    by_hash.emplace(hash, report.payloads.size());
    PayloadCopies pc;
    pc.lpn = item.lpn;
    pc.payload_sha256 = hash;
    report.payloads.push_back(std::move(pc));
    payload_size.push_back(item.payload.size());
  }
  for (const auto& e : dump) {
    if (e.state == PageState::Free) continue;
    auto it = by_hash.find(sha256_hex(e.payload));
    if (it == by_hash.end()) continue;
    auto& pc = report.payloads[it->second];
    std::string cls;
    if (e.state == PageState::Valid) {
      cls = "live";
      ++pc.live;
      ++report.live_copies;
    } else if (e.retired) {
      cls = "retired";
      ++pc.retired;
      ++report.retired_copies;
      report.recoverable_deleted_bytes += payload_size[it->second];
    } else {
      cls = "stale";
      ++pc.stale;
      ++report.stale_copies;
      report.recoverable_deleted_bytes += payload_size[it->second];
    }
    pc.copies.push_back({e.address, std::move(cls)});
  }
  return report;
}

namespace {

std::optional<std::uint32_t> lowest_unmapped(const FtlState& state) {
  for (std::uint32_t lpn = 0; lpn < state.geometry().logical_capacity(); ++lpn) {
    if (!state.mapping(lpn)) return lpn;
  }
  return std::nullopt;
}

}  // namespace

CycleResult run_cycle_experiment(FtlState& state, std::span<const Bytes> payloads, std::uint32_t iterations,
                                 bool force_gc) {
  if (iterations == 0) throw FtlError("iterations must be at least 1");
  if (payloads.size() > state.geometry().logical_capacity()) throw FtlError("payload set does not fit device");
  CycleResult result;
  std::vector<HistoryItem> history;
  std::vector<std::string> hashes;
  for (const auto& p : payloads) hashes.push_back(sha256_hex(p));

  try {
    for (std::uint32_t i = 0; i < payloads.size(); ++i) {
      state.write(i, payloads[i]);
      history.push_back({i, payloads[i]});
    }
    for (std::uint32_t i = 0; i < payloads.size(); ++i) state.trim(i);
    if (force_gc) state.garbage_collect();
  } catch (const FtlError& e) {
    result.ended_early = true;
    result.stop_reason = e.what();
    return result;
  }

  std::vector<std::uint32_t> recovered_lpns;
  for (std::uint32_t it = 1; it <= iterations; ++it) {
    try {
      if (!recovered_lpns.empty()) {
        for (auto lpn : recovered_lpns) state.trim(lpn);
        recovered_lpns.clear();
        if (force_gc) state.garbage_collect();
      }

      // Newest logically-deleted copy of each payload, as a recovery tool would find it.
      const auto dump = state.forensic_dump();
      for (const auto& want : hashes) {
        const DumpEntry* newest = nullptr;
        for (const auto& e : dump) {
          if (e.state != PageState::Stale) continue;
          if (newest != nullptr && e.timestamp <= newest->timestamp) continue;
          if (sha256_hex(e.payload) == want) newest = &e;
        }
        if (newest == nullptr) continue;
        const auto lpn = lowest_unmapped(state);
        if (!lpn) throw FtlError("device full");
        state.write(*lpn, newest->payload);
        recovered_lpns.push_back(*lpn);
      }
    } catch (const FtlError& e) {
      result.ended_early = true;
      result.stop_reason = e.what();
      break;
    }

    const auto dump = state.forensic_dump();
    const auto audit = remanence_audit(dump, history);
    CycleIteration row;
    row.iteration = it;
    row.recoverable_bytes = audit.recoverable_deleted_bytes;
    row.distinct_copies = audit.live_copies + audit.stale_copies + audit.retired_copies;
    row.live_copies = audit.live_copies;
    std::uint32_t present = 0;
    for (const auto& pc : audit.payloads) present += pc.total() > 0;
    row.byte_identical_fraction =
        audit.payloads.empty() ? 0.0 : static_cast<double>(present) / static_cast<double>(audit.payloads.size());
    row.gc_runs = state.gc_runs();
    result.iterations.push_back(row);
  }
  return result;
}

Bytes random_payload(std::mt19937_64& rng, std::uint32_t size) {
  Bytes out(size);
  for (std::uint32_t i = 0; i < size; i += 8) {
    std::uint64_t v = rng();
    for (std::uint32_t k = 0; k < 8 && i + k < size; ++k) out[i + k] = static_cast<std::uint8_t>(v >> (8 * k));
  }
  return out;
}

std::optional<std::uint32_t> drive_to_retirement(FtlState& state, std::mt19937_64& rng, std::uint64_t max_writes,
                                                 std::vector<HistoryItem>* history) {
  if (!state.config().gc_enabled) throw FtlError("retirement needs garbage collection enabled");
  const auto& g = state.geometry();
  const std::uint32_t working_set = std::min<std::uint32_t>(g.pages_per_block / 4 + 1, g.logical_capacity());
  auto retired = [&]() -> std::optional<std::uint32_t> {
    for (std::uint32_t b = 0; b < g.blocks; ++b) {
      if (state.block(b).retired) return b;
    }
    return std::nullopt;
  };
  for (std::uint64_t i = 0; i < max_writes; ++i) {
    if (auto b = retired()) return b;
    const auto lpn = static_cast<std::uint32_t>(i % working_set);
    Bytes payload = random_payload(rng, g.page_size);
    state.write(lpn, payload);
    if (history != nullptr) history->push_back({lpn, std::move(payload)});
  }
  return retired();
}

RandomOpStats random_operations(FtlState& state, std::mt19937_64& rng, std::uint64_t steps,
                                std::vector<HistoryItem>* history, const StepHook& hook) {
  RandomOpStats stats;
  const std::uint32_t logical = state.geometry().logical_capacity();
  for (std::uint64_t step = 0; step < steps; ++step) {
    const auto op = rng() % 10;
    const auto lpn = static_cast<std::uint32_t>(rng() % logical);
    try {
      if (op < 6) {
        Bytes payload = random_payload(rng, state.geometry().page_size);
        state.write(lpn, payload);
        if (history != nullptr) history->push_back({lpn, std::move(payload)});
        ++stats.writes;
      } else if (op < 8) {
        state.trim(lpn);
        ++stats.trims;
      } else if (op < 9) {
        (void)state.read(lpn);
        ++stats.reads;
      } else {
        state.garbage_collect();
        ++stats.collections;
      }
    } catch (const FtlError&) {
      ++stats.rejected;
    }
    if (hook) hook(state, step);
  }
  return stats;
}

std::string format_trace(std::span<const TraceOp> ops) {
  std::ostringstream out;
  for (const auto& op : ops) {
    switch (op.kind) {
      case TraceOp::Kind::Write: out << "write " << op.lpn << ' ' << to_hex(op.payload) << '\n'; break;
      case TraceOp::Kind::Trim: out << "trim " << op.lpn << '\n'; break;
      case TraceOp::Kind::Read: out << "read " << op.lpn << '\n'; break;
      case TraceOp::Kind::Gc: out << "gc\n"; break;
    }
  }
  return out.str();
}

namespace {

Bytes from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) throw FtlError("odd-length hex payload");
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw FtlError("bad hex digit in payload");
  };
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<std::uint8_t>((nibble(hex[2 * i]) << 4) | nibble(hex[2 * i + 1]));
  }
  return out;
}

}  // namespace

std::vector<TraceOp> parse_trace(std::istream& in) {
  std::vector<TraceOp> ops;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string verb;
    ls >> verb;
    TraceOp op;
    auto need_lpn = [&] {
      long long v = -1;
      if (!(ls >> v) || v < 0) throw FtlError("bad trace line " + std::to_string(lineno));
      op.lpn = static_cast<std::uint32_t>(v);
    };
    if (verb == "write") {
      op.kind = TraceOp::Kind::Write;
      need_lpn();
      std::string hex;
      if (!(ls >> hex)) throw FtlError("bad trace line " + std::to_string(lineno));
      op.payload = from_hex(hex);
    } else if (verb == "trim") {
      op.kind = TraceOp::Kind::Trim;
      need_lpn();
    } else if (verb == "read") {
      op.kind = TraceOp::Kind::Read;
      need_lpn();
    } else if (verb == "gc") {
      op.kind = TraceOp::Kind::Gc;
    } else {
      throw FtlError("bad trace line " + std::to_string(lineno));
    }
    ops.push_back(std::move(op));
  }
  return ops;
}

void replay(FtlState& state, std::span<const TraceOp> ops) {
  for (const auto& op : ops) {
    switch (op.kind) {
      case TraceOp::Kind::Write: state.write(op.lpn, op.payload); break;
      case TraceOp::Kind::Trim: state.trim(op.lpn); break;
      case TraceOp::Kind::Read: (void)state.read(op.lpn); break;
      case TraceOp::Kind::Gc: state.garbage_collect(); break;
    }
  }
}

std::string format_dump(std::span<const DumpEntry> dump) {
  std::ostringstream out;
  for (const auto& e : dump) {
    out << e.address << ' ' << e.tag() << ' ';
    if (e.lpn) {
      out << *e.lpn;
    } else {
      out << '-';
    }
    out << ' ' << e.timestamp << ' ' << sha256_hex(e.payload) << '\n';
  }
  return out.str();
}

}  // namespace remnant::ftl
