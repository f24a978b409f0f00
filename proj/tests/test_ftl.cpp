#include <gtest/gtest.h>

#include <sstream>

#include "helpers.hpp"
#include "remnant/ftl.hpp"

using namespace remnant;
using namespace remnant::ftl;

namespace {

FtlConfig small_config(bool gc = false, std::uint32_t endurance = 10) {
  FtlConfig c;
  c.geometry.blocks = 8;
  c.geometry.pages_per_block = 32;
  c.geometry.page_size = 64;
  c.geometry.reserve_blocks = 1;
  c.geometry.endurance = endurance;
  c.gc_enabled = gc;
  return c;
}

Bytes payload(std::uint8_t tag, std::uint32_t size = 64) {
  Bytes b(size);
  for (std::uint32_t i = 0; i < size; ++i) b[i] = static_cast<std::uint8_t>(tag + i * 7);
  return b;
}

std::uint32_t count_state(const FtlState& s, PageState st) {
  std::uint32_t n = 0;
  for (std::uint32_t a = 0; a < s.geometry().total_pages(); ++a) n += s.page(a).state == st;
  return n;
}

}  // namespace

TEST(Ftl, RewriteLeavesStaleCopy) {
  FtlState s(small_config());
  s.write(0, payload(1));
  s.write(0, payload(2));
  EXPECT_EQ(count_state(s, PageState::Stale), 1u);
  EXPECT_EQ(s.read(0), payload(2));
  const auto dump = s.forensic_dump();
  bool found_old = false;
  for (const auto& e : dump) found_old |= e.state == PageState::Stale && e.payload == payload(1);
  EXPECT_TRUE(found_old);
}

TEST(Ftl, KWritesLeaveKMinusOneStaleInOrder) {
  for (std::uint32_t k = 1; k <= 12; ++k) {
    FtlState s(small_config());
    for (std::uint32_t i = 0; i < k; ++i) s.write(3, payload(static_cast<std::uint8_t>(i)));
    EXPECT_EQ(count_state(s, PageState::Stale), k - 1);
    EXPECT_EQ(count_state(s, PageState::Valid), 1u);
    std::vector<std::uint64_t> stamps;
    for (const auto& e : s.forensic_dump()) {
      if (e.state == PageState::Stale) stamps.push_back(e.timestamp);
    }
    EXPECT_TRUE(std::is_sorted(stamps.begin(), stamps.end()));
    EXPECT_EQ(std::adjacent_find(stamps.begin(), stamps.end()), stamps.end());
    const auto live = *s.mapping(3);
    for (auto t : stamps) EXPECT_LT(t, s.page(live).timestamp);
  }
}

TEST(Ftl, TrimLeavesPayloadButHostReadsErased) {
  FtlState s(small_config());
  s.write(5, payload(9));
  const auto addr = *s.mapping(5);
  s.trim(5);
  EXPECT_FALSE(s.mapping(5).has_value());
  EXPECT_EQ(s.read(5), erased_page(64));
  EXPECT_EQ(s.page(addr).state, PageState::Stale);
  EXPECT_EQ(s.page(addr).payload, payload(9));
}

TEST(Ftl, TrimUnmappedIsNoOp) {
  FtlState s(small_config());
  s.write(1, payload(1));
  const auto before = s.state_hash();
  s.trim(2);
  EXPECT_EQ(s.state_hash(), before);
}

TEST(Ftl, TrimAllKeepsEveryPayload) {
  FtlState s(small_config());
  for (std::uint32_t i = 0; i < 20; ++i) s.write(i, payload(static_cast<std::uint8_t>(i)));
  for (std::uint32_t i = 0; i < 20; ++i) s.trim(i);
  EXPECT_EQ(count_state(s, PageState::Valid), 0u);
  EXPECT_EQ(count_state(s, PageState::Stale), 20u);
  for (std::uint32_t i = 0; i < 20; ++i) EXPECT_EQ(s.read(i), erased_page(64));
}

TEST(Ftl, FreshDumpIsErased) {
  FtlState s(small_config());
  const auto dump = s.forensic_dump();
  ASSERT_EQ(dump.size(), 8u * 32);
  for (const auto& e : dump) {
    EXPECT_EQ(e.state, PageState::Free);
    EXPECT_EQ(e.tag(), "free");
    EXPECT_EQ(e.payload, erased_page(64));
  }
}

TEST(Ftl, AllocationFillsLowestBlockFirst) {
  FtlState s(small_config());
  for (std::uint32_t i = 0; i < 33; ++i) s.write(i, payload(static_cast<std::uint8_t>(i)));
  for (std::uint32_t i = 0; i < 32; ++i) EXPECT_EQ(*s.mapping(i) / 32, 0u);
  EXPECT_EQ(*s.mapping(32) / 32, 1u);
}

TEST(Ftl, Errors) {
  FtlState s(small_config());
  EXPECT_THROW(s.write(10000, payload(1)), FtlError);
  EXPECT_THROW(s.write(0, payload(1, 10)), FtlError);
  EXPECT_THROW(s.read(10000), FtlError);
  EXPECT_THROW(s.trim(10000), FtlError);
}

TEST(Ftl, DeviceFullWithoutGc) {
  FtlState s(small_config(false));
  const auto cap = s.geometry().logical_capacity();
  std::uint32_t written = 0;
  try {
    for (;; ++written) s.write(written % cap, payload(static_cast<std::uint8_t>(written)));
  } catch (const FtlError& e) {
    EXPECT_STREQ(e.what(), "device full");
  }
  EXPECT_EQ(written, s.geometry().active_blocks() * s.geometry().pages_per_block);
}

TEST(FlashGeometry, Validate) {
  FlashGeometry g;
  EXPECT_NO_THROW(g.validate());
  EXPECT_EQ(g.logical_capacity(), (8u - 1 - 2) * 32);
  g.reserve_blocks = 8;
  EXPECT_THROW(g.validate(), FtlError);
  g = {};
  g.blocks = 3;
  EXPECT_THROW(g.validate(), FtlError);
  g = {};
  g.page_size = 0;
  EXPECT_THROW(g.validate(), FtlError);
  g = {};
  g.logical_pages = 7 * 32 + 1;
  EXPECT_THROW(g.validate(), FtlError);
  FtlConfig c;
  c.gc_threshold = 1.0;
  EXPECT_THROW(FtlState{c}, FtlError);
}

TEST(Gc, FullyStaleBlockIsErased) {
  FtlState s(small_config(false));
  for (std::uint32_t i = 0; i < 32; ++i) s.write(i, payload(static_cast<std::uint8_t>(i)));
  for (std::uint32_t i = 0; i < 32; ++i) s.trim(i);
  ASSERT_TRUE(s.garbage_collect());
  EXPECT_EQ(s.block(0).erase_count, 1u);
  EXPECT_EQ(s.free_pages_in(0), 32u);
  for (std::uint32_t a = 0; a < 32; ++a) EXPECT_EQ(s.page(a).payload, erased_page(64));
  EXPECT_EQ(s.gc_runs(), 1u);
  EXPECT_FALSE(s.garbage_collect());
}

TEST(Gc, ValidPageIsRelocated) {
  FtlState s(small_config(false));
  for (std::uint32_t i = 0; i < 32; ++i) s.write(i, payload(static_cast<std::uint8_t>(i)));
  for (std::uint32_t i = 1; i < 32; ++i) s.trim(i);
  ASSERT_TRUE(s.garbage_collect());
  ASSERT_TRUE(s.mapping(0).has_value());
  EXPECT_NE(*s.mapping(0) / 32, 0u);
  EXPECT_EQ(s.read(0), payload(0));
  EXPECT_EQ(s.block(0).erase_count, 1u);
  s.check_invariants();
}

TEST(Gc, VictimHasMostStaleLowestIndexOnTie) {
  FtlState s(small_config(false));
  for (std::uint32_t i = 0; i < 96; ++i) s.write(i % 96, payload(static_cast<std::uint8_t>(i)));
  // 4 stale in block 0, 4 in block 1, 6 in block 2
  for (std::uint32_t i : {0u, 1u, 2u, 3u, 32u, 33u, 34u, 35u, 64u, 65u, 66u, 67u, 68u, 69u}) s.trim(i);
  ASSERT_TRUE(s.garbage_collect());
  EXPECT_EQ(s.block(2).erase_count, 1u);
  ASSERT_TRUE(s.garbage_collect());
  EXPECT_EQ(s.block(0).erase_count, 1u);
  EXPECT_EQ(s.block(1).erase_count, 0u);
}

TEST(Gc, AutomaticCollectionKeepsWritesGoing) {
  FtlState s(small_config(true, 100000));
  std::mt19937_64 rng(1);
  const auto cap = s.geometry().logical_capacity();
  for (int i = 0; i < 5000; ++i) s.write(static_cast<std::uint32_t>(rng() % cap), payload(static_cast<std::uint8_t>(i)));
  EXPECT_GT(s.gc_runs(), 0u);
  s.check_invariants();
}

TEST(Retirement, RetiresAtEndurance) {
  FtlState s(small_config(true, 3));
  std::mt19937_64 rng(4);
  std::vector<HistoryItem> history;
  const auto b = drive_to_retirement(s, rng, 100000, &history);
  ASSERT_TRUE(b.has_value());
  EXPECT_TRUE(s.block(*b).retired);
  EXPECT_EQ(s.block(*b).erase_count, 3u);
  EXPECT_TRUE(s.block(*b).replacement.has_value());
  EXPECT_TRUE(s.reserve_pool().empty());
  for (std::uint32_t i = 0; i < 32; ++i) {
    if (s.page(*b * 32 + i).state != PageState::Free) EXPECT_EQ(s.forensic_dump()[*b * 32 + i].tag(), "retired");
  }
  s.check_invariants();
}

TEST(Retirement, RetiredBlocksAreNeverCollected) {
  FtlState s(small_config(true, 3));
  std::mt19937_64 rng(4);
  const auto b = drive_to_retirement(s, rng, 100000);
  ASSERT_TRUE(b.has_value());
  Bytes before;
  for (std::uint32_t i = 0; i < 32; ++i) {
    const auto& p = s.page(*b * 32 + i).payload;
    before.insert(before.end(), p.begin(), p.end());
  }
  const auto cap = s.geometry().logical_capacity();
  for (int i = 0; i < 1000 && !s.read_only(); ++i) {
    try {
      s.write(static_cast<std::uint32_t>(rng() % cap), payload(static_cast<std::uint8_t>(i)));
    } catch (const FtlError&) {
      break;
    }
  }
  Bytes after;
  for (std::uint32_t i = 0; i < 32; ++i) {
    const auto& p = s.page(*b * 32 + i).payload;
    after.insert(after.end(), p.begin(), p.end());
  }
  EXPECT_EQ(before, after);
  EXPECT_EQ(s.block(*b).erase_count, 3u);
}

TEST(Retirement, EmptyReserveMakesDeviceReadOnly) {
  auto c = small_config(true, 2);
  c.geometry.reserve_blocks = 0;
  c.geometry.blocks = 5;
  FtlState s(c);
  std::mt19937_64 rng(2);
  ASSERT_TRUE(drive_to_retirement(s, rng, 100000).has_value());
  EXPECT_TRUE(s.read_only());
  try {
    s.write(0, payload(1));
    FAIL();
  } catch (const FtlError& e) {
    EXPECT_STREQ(e.what(), "device is read-only");
  }
  EXPECT_NO_THROW(s.read(0));
}

TEST(Retirement, Preconditions) {
  FtlState s(small_config(false, 3));
  EXPECT_THROW(s.retire_block(0), FtlError);  // not worn out
  EXPECT_THROW(s.retire_block(7), FtlError);  // reserve block
  EXPECT_THROW(s.retire_block(99), std::out_of_range);
  FtlState g(small_config(false, 3));
  std::mt19937_64 rng(1);
  EXPECT_THROW(drive_to_retirement(g, rng, 10), FtlError);
}

TEST(Audit, CountsCopiesPerPayload) {
  FtlState s(small_config());
  std::vector<HistoryItem> history;
  for (std::uint8_t k = 0; k < 5; ++k) {
    s.write(0, payload(k));
    history.push_back({0, payload(k)});
  }
  s.write(1, payload(100));
  history.push_back({1, payload(100)});
  s.trim(1);
  const auto dump = s.forensic_dump();
  const auto rep = remanence_audit(dump, history);
  ASSERT_EQ(rep.payloads.size(), 6u);
  EXPECT_EQ(rep.live_copies, 1u);
  EXPECT_EQ(rep.stale_copies, 5u);
  EXPECT_EQ(rep.recoverable_deleted_bytes, 5u * 64);
  EXPECT_EQ(rep.payloads[4].live, 1u);
  EXPECT_EQ(rep.payloads[5].stale, 1u);
}

TEST(Audit, DuplicatePayloadsCountOnce) {
  FtlState s(small_config());
  std::vector<HistoryItem> history = {{0, payload(1)}, {1, payload(1)}};
  s.write(0, payload(1));
  s.write(1, payload(1));
  const auto dump = s.forensic_dump();
  const auto rep = remanence_audit(dump, history);
  ASSERT_EQ(rep.payloads.size(), 1u);
  EXPECT_EQ(rep.payloads[0].live, 2u);
}

TEST(Cycle, OneIterationHasTwoCopies) {
  FtlState s(small_config(false));
  const std::vector<Bytes> payloads = {payload(7)};
  const auto res = run_cycle_experiment(s, payloads, 1);
  ASSERT_EQ(res.iterations.size(), 1u);
  EXPECT_EQ(res.iterations[0].distinct_copies, 2u);
  EXPECT_EQ(res.iterations[0].live_copies, 1u);
  EXPECT_EQ(res.iterations[0].recoverable_bytes, 64u);
}

TEST(Cycle, RejectsBadArguments) {
  FtlState s(small_config(false));
  const std::vector<Bytes> payloads = {payload(7)};
  EXPECT_THROW(run_cycle_experiment(s, payloads, 0), FtlError);
  std::vector<Bytes> many(s.geometry().logical_capacity() + 1, payload(1));
  EXPECT_THROW(run_cycle_experiment(s, many, 1), FtlError);
}

TEST(Cycle, ForcedGcBoundsTheCopies) {
  FtlState s(small_config(true));
  std::vector<Bytes> payloads;
  for (std::uint8_t i = 0; i < 32; ++i) payloads.push_back(payload(i));
  const auto res = run_cycle_experiment(s, payloads, 5, true);
  ASSERT_FALSE(res.iterations.empty());
  for (const auto& it : res.iterations) EXPECT_LE(it.distinct_copies, 3u * 32);
}

TEST(Trace, FormatParseRoundTrip) {
  std::vector<TraceOp> ops = {
      {TraceOp::Kind::Write, 3, payload(1, 8)},
      {TraceOp::Kind::Trim, 3, {}},
      {TraceOp::Kind::Read, 4, {}},
      {TraceOp::Kind::Gc, 0, {}},
  };
  std::istringstream in(format_trace(ops));
  EXPECT_EQ(parse_trace(in), ops);
}

TEST(Trace, CommentsAndBlankLines) {
  std::istringstream in("# warmup\n\nwrite 0 00ff\n  gc\n");
  const auto ops = parse_trace(in);
  ASSERT_EQ(ops.size(), 2u);
  EXPECT_EQ(ops[0].payload, (Bytes{0x00, 0xFF}));
}

TEST(Trace, BadLines) {
  for (const char* text : {"write 0\n", "frobnicate\n", "trim -1\n", "write 0 abc\n", "write 0 zz\n"}) {
    std::istringstream in(text);
    EXPECT_THROW(parse_trace(in), FtlError) << text;
  }
  std::istringstream in("gc\nwrite x 00\n");
  try {
    parse_trace(in);
    FAIL();
  } catch (const FtlError& e) {
    EXPECT_STREQ(e.what(), "bad trace line 2");
  }
}

TEST(Trace, ReplayMatchesDirectCalls) {
  auto c = small_config(true, 1000);
  c.geometry.page_size = 8;
  std::vector<TraceOp> ops;
  std::mt19937_64 rng(3);
  for (int i = 0; i < 400; ++i) {
    const auto lpn = static_cast<std::uint32_t>(rng() % 50);
    switch (rng() % 4) {
      case 0: ops.push_back({TraceOp::Kind::Trim, lpn, {}}); break;
      case 1: ops.push_back({TraceOp::Kind::Read, lpn, {}}); break;
      default: ops.push_back({TraceOp::Kind::Write, lpn, random_payload(rng, 8)}); break;
    }
  }
  FtlState a(c);
  FtlState b(c);
  replay(a, ops);
  for (const auto& op : ops) {
    if (op.kind == TraceOp::Kind::Write) b.write(op.lpn, op.payload);
    if (op.kind == TraceOp::Kind::Trim) b.trim(op.lpn);
  }
  EXPECT_EQ(a.state_hash(), b.state_hash());
}

TEST(Dump, FormatHasOneLinePerPage) {
  FtlState s(small_config());
  s.write(0, payload(1));
  const auto text = format_dump(s.forensic_dump());
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 8 * 32);
  EXPECT_EQ(text.rfind("0 valid 0 ", 0), 0u);
}

// ---- properties ----------------------------------------------------------

TEST(FtlProperty, ConservationAndInvariantsEveryStep) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto c = small_config(true, 10);
    c.seed = seed;
    FtlState s(c);
    std::mt19937_64 rng(seed);
    const auto total = s.geometry().total_pages();
    random_operations(s, rng, 500, nullptr, [&](const FtlState& st, std::uint64_t step) {
      const auto n = st.counts();
      ASSERT_EQ(n.free + n.valid + n.stale, total) << "seed " << seed << " step " << step;
      ASSERT_NO_THROW(st.check_invariants()) << "seed " << seed << " step " << step;
    });
  }
}

TEST(FtlProperty, SameSeedSameHash) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::string hashes[2];
    for (auto& h : hashes) {
      FtlState s(small_config(true));
      std::mt19937_64 rng(seed);
      random_operations(s, rng, 500);
      h = s.state_hash();
    }
    EXPECT_EQ(hashes[0], hashes[1]);
  }
}

TEST(FtlProperty, ReadReturnsLastWriteUntilTrim) {
  FtlState s(small_config(true, 100000));
  std::mt19937_64 rng(8);
  const auto cap = s.geometry().logical_capacity();
  std::vector<std::optional<Bytes>> model(cap);
  for (int i = 0; i < 3000; ++i) {
    const auto lpn = static_cast<std::uint32_t>(rng() % cap);
    if (rng() % 3 == 0) {
      s.trim(lpn);
      model[lpn].reset();
    } else {
      auto p = random_payload(rng, 64);
      s.write(lpn, p);
      model[lpn] = p;
    }
    const auto probe = static_cast<std::uint32_t>(rng() % cap);
    ASSERT_EQ(s.read(probe), model[probe] ? *model[probe] : erased_page(64));
  }
}

// Spread of erase counts across active blocks under uniform random
// overwrites. The bound holds for short runs; it grows with N (see notes).
TEST(FtlProperty, WearSpreadBounded) {
  constexpr std::uint64_t kWrites = 500;
  constexpr std::uint32_t kBound = 2;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    FtlConfig c;
    c.geometry.endurance = 1000000;
    FtlState s(c);
    std::mt19937_64 rng(seed);
    const auto cap = s.geometry().logical_capacity();
    for (std::uint64_t i = 0; i < kWrites; ++i) {
      s.write(static_cast<std::uint32_t>(rng() % cap), random_payload(rng, s.geometry().page_size));
    }
    std::uint32_t lo = UINT32_MAX, hi = 0;
    for (std::uint32_t b = 0; b < s.geometry().blocks; ++b) {
      if (s.block(b).in_reserve || s.block(b).retired) continue;
      lo = std::min(lo, s.block(b).erase_count);
      hi = std::max(hi, s.block(b).erase_count);
    }
    EXPECT_LE(hi - lo, kBound) << "seed " << seed;
  }
}
