#include "sectorhash/sigdb.hpp"

#include <gtest/gtest.h>

#include <map>
#include <random>
#include <set>
#include <vector>

#include "support.hpp"

namespace sectorhash {
namespace {

// Every occupied slot must be reachable from its home slot through occupied
// slots only; returns the number of violations.
int probe_chain_violations(const SignatureTable& t) {
  int bad = 0;
  for (std::uint64_t l = 0; l < t.capacity(); ++l) {
    if (!t.occupied(l)) continue;
    std::uint64_t s = t.home_slot(t.signature_at(l));
    for (std::uint64_t steps = 0; s != l; ++steps) {
      if (!t.occupied(s) || steps > t.capacity()) {
        ++bad;
        break;
      }
      s = (s + 1) % t.capacity();
    }
  }
  return bad;
}

TEST(SignatureTable, InsertIntoEmptyLandsAtHome) {
  SignatureTable t(4);
  const auto r = t.insert(SectorSignature{0xABC5}, 7);
  EXPECT_EQ(r.status, InsertStatus::kInserted);
  EXPECT_EQ(r.slot, 5u);
  EXPECT_EQ(r.probe_distance, 0u);
  EXPECT_EQ(t.occupied_count(), 1u);
}

TEST(SignatureTable, LinearProbingHandTrace) {
  SignatureTable t(4);
  ASSERT_EQ(t.insert(SectorSignature{0x25}, 0).slot, 5u);
  ASSERT_EQ(t.insert(SectorSignature{0x06}, 1).slot, 6u);
  const auto r = t.insert(SectorSignature{0x15}, 2);
  EXPECT_EQ(r.status, InsertStatus::kInserted);
  EXPECT_EQ(r.slot, 7u);
  EXPECT_EQ(r.probe_distance, 2u);
}

TEST(SignatureTable, ProbingWrapsAround) {
  SignatureTable t(2);
  ASSERT_EQ(t.insert(SectorSignature{0x3}, 0).slot, 3u);
  ASSERT_EQ(t.insert(SectorSignature{0x0}, 1).slot, 0u);  // zero is a legal signature
  ASSERT_EQ(t.insert(SectorSignature{0x1}, 2).slot, 1u);
  const auto r = t.insert(SectorSignature{0x7}, 3);
  EXPECT_EQ(r.status, InsertStatus::kInserted);
  EXPECT_EQ(r.slot, 2u);
  EXPECT_EQ(r.probe_distance, 3u);
  EXPECT_EQ(probe_chain_violations(t), 0);
}

TEST(SignatureTable, LookupInEmptyTableIsAbsentAfterOneProbe) {
  SignatureTable t(8);
  const auto r = t.lookup(SectorSignature{42});
  EXPECT_FALSE(r.found);
  EXPECT_EQ(r.probes, 1u);
  EXPECT_FALSE(t.lookup(SectorSignature{0}).found);
}

TEST(SignatureTable, LookupFollowsCollisionChain) {
  SignatureTable t(6);
  const SectorSignature a{0x1000 | 9}, b{0x2000 | 9};
  t.insert(a, 10);
  t.insert(b, 20);
  const auto r = t.lookup(b);
  ASSERT_TRUE(r.found);
  EXPECT_EQ(r.ref, 20u);
  EXPECT_EQ(r.probes - 1, 1u);
  EXPECT_EQ(t.lookup(a).ref, 10u);
}

TEST(SignatureTable, DuplicateKeepsFirstRef) {
  SignatureTable t(4);
  t.insert(SectorSignature{99}, 1);
  const auto r = t.insert(SectorSignature{99}, 2);
  EXPECT_EQ(r.status, InsertStatus::kDuplicate);
  EXPECT_EQ(r.ref, 1u);
  EXPECT_EQ(t.occupied_count(), 1u);
  EXPECT_EQ(t.lookup(SectorSignature{99}).ref, 1u);
}

TEST(SignatureTable, FullTableRejectsAndTerminates) {
  SignatureTable t(2);
  for (std::uint64_t s = 0; s < 4; ++s) t.insert(SectorSignature{s * 17}, 0);
  ASSERT_TRUE(t.full());
  EXPECT_EQ(t.insert(SectorSignature{1234}, 0).status, InsertStatus::kFull);
  EXPECT_EQ(t.insert(SectorSignature{17}, 9).status, InsertStatus::kDuplicate);
  const auto r = t.lookup(SectorSignature{1234});
  EXPECT_FALSE(r.found);
  EXPECT_EQ(r.probes, 4u);
}

TEST(SignatureTable, RejectsBadWidth) {
  EXPECT_THROW(SignatureTable(0), std::invalid_argument);
  EXPECT_THROW(SignatureTable(kMaxIndexWidth + 1), std::invalid_argument);
}

TEST(SignatureTable, RandomizedRoundTripAndChainIntegrity) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    SignatureTable t(10);
    std::map<std::uint64_t, std::uint32_t> expected;
    const int n = static_cast<int>(rng() % 1000);
    for (int i = 0; i < n; ++i) {
      // Few distinct high bits force long chains and some duplicates.
      const SectorSignature h{(rng() % 64) << 10 | (rng() % 64)};
      const auto r = t.insert(h, static_cast<std::uint32_t>(i));
      if (expected.emplace(h.value, i).second) {
        ASSERT_EQ(r.status, InsertStatus::kInserted);
      } else {
        ASSERT_EQ(r.status, InsertStatus::kDuplicate);
      }
      ASSERT_EQ(probe_chain_violations(t), 0);
    }
    for (const auto& [sig, ref] : expected) {
      const auto r = t.lookup(SectorSignature{sig});
      ASSERT_TRUE(r.found);
      EXPECT_EQ(r.ref, ref);
    }
    for (int i = 0; i < 200; ++i) {
      const SectorSignature h{rng() | (std::uint64_t{1} << 63)};
      if (!expected.count(h.value)) {
        EXPECT_FALSE(t.lookup(h).found);
      }
    }
  }
}

double mean_insert_distance(double occupancy, std::uint64_t seed) {
  SignatureTable t(12);
  std::mt19937_64 rng(seed);
  const auto target = static_cast<std::uint64_t>(occupancy * t.capacity());
  while (t.occupied_count() < target) t.insert(SectorSignature{rng()}, 0);
  std::uint64_t total = 0;
  std::uint64_t n = 0;
  for (std::uint64_t l = 0; l < t.capacity(); ++l) {
    if (!t.occupied(l)) continue;
    total += t.lookup(t.signature_at(l)).probes - 1;
    ++n;
  }
  return static_cast<double>(total) / static_cast<double>(n);
}

TEST(SignatureTable, ProbeDistanceGrowsWithOccupancy) {
  int wins = 0;
  for (std::uint64_t trial = 0; trial < 10; ++trial) {
    if (mean_insert_distance(0.9, trial) > mean_insert_distance(0.5, trial)) ++wins;
  }
  EXPECT_EQ(wins, 10);
}

Geometry small_geometry(unsigned w = 8) {
  return Geometry{HashAlgorithm::kDjb2, w, 512, 8};
}

TEST(SignatureTableSet, TauFollowsSectorIndex) {
  SignatureTableSet set(small_geometry());
  std::mt19937_64 rng(1);
  const auto s0 = testing::random_bytes(rng, 512);
  const auto s9 = testing::random_bytes(rng, 512);
  set.insert_master_sector(s0, 0, 0);
  set.insert_master_sector(s9, 0, 4608);
  EXPECT_EQ(set.table(0).occupied_count(), 1u);
  EXPECT_EQ(set.table(1).occupied_count(), 1u);
  const auto r = set.lookup(1, sector_signature(s9, HashAlgorithm::kDjb2));
  ASSERT_TRUE(r.found);
  EXPECT_EQ(set.entry(r.ref), (MasterIndexEntry{0, 1, 4608}));
}

TEST(SignatureTableSet, SameTauDuplicateIsReported) {
  SignatureTableSet set(small_geometry());
  std::mt19937_64 rng(2);
  const auto s = testing::random_bytes(rng, 512);
  EXPECT_EQ(set.insert_master_sector(s, 0, 0).status, InsertStatus::kInserted);
  EXPECT_EQ(set.insert_master_sector(s, 0, 4096).status, InsertStatus::kDuplicate);
  EXPECT_EQ(set.entries().size(), 1u);
  // Same bytes at another tau is a different table.
  EXPECT_EQ(set.insert_master_sector(s, 1, 512).status, InsertStatus::kInserted);
}

TEST(SignatureTableSet, MisalignedOffsetRejected) {
  SignatureTableSet set(small_geometry());
  const std::vector<std::uint8_t> s(512, 1);
  EXPECT_THROW(set.insert_master_sector(s, 0, 100), std::invalid_argument);
}

TEST(SignatureTableSet, OverflowNamesTau) {
  SignatureTableSet set(small_geometry(1));
  std::mt19937_64 rng(3);
  set.insert_master_sector(testing::random_bytes(rng, 512), 0, 3 * 512);
  set.insert_master_sector(testing::random_bytes(rng, 512), 0, 11 * 512);
  try {
    set.insert_master_sector(testing::random_bytes(rng, 512), 0, 19 * 512);
    FAIL() << "expected TableFullError";
  } catch (const TableFullError& e) {
    EXPECT_EQ(e.tau(), 3u);
  }
}

TEST(SignatureTableSet, Occupancy) {
  SignatureTableSet empty(small_geometry(10));
  for (double o : empty.occupancy().per_table) EXPECT_EQ(o, 0.0);
  EXPECT_EQ(empty.occupancy().aggregate, 0.0);

  SignatureTableSet set(small_geometry(10));
  for (std::uint64_t i = 0; i < 512; ++i) set.table(0).insert(SectorSignature{i}, 0);
  for (std::uint64_t i = 0; i < 256; ++i) set.table(3).insert(SectorSignature{i}, 0);
  const auto occ = set.occupancy();
  EXPECT_DOUBLE_EQ(occ.per_table[0], 0.5);
  EXPECT_DOUBLE_EQ(occ.per_table[3], 0.25);
  double mean = 0;
  for (double o : occ.per_table) mean += o / occ.per_table.size();
  EXPECT_DOUBLE_EQ(occ.aggregate, mean);
}

TEST(SignatureTableSet, RejectsBadGeometry) {
  EXPECT_THROW(SignatureTableSet(Geometry{HashAlgorithm::kDjb2, 8, 0, 8}), std::invalid_argument);
  EXPECT_THROW(SignatureTableSet(Geometry{HashAlgorithm::kDjb2, 8, 512, 0}), std::invalid_argument);
  EXPECT_THROW(SignatureTableSet(Geometry{static_cast<HashAlgorithm>(9), 8, 512, 8}),
               std::invalid_argument);
}

}  // namespace
}  // namespace sectorhash
