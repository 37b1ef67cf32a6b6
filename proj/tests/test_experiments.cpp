#include "sectorhash/experiments.hpp"

#include <gtest/gtest.h>

#include <set>
#include <vector>

#include "oracles.hpp"

namespace sectorhash {
namespace {

std::vector<std::uint64_t> signatures_of(std::uint64_t n, HashAlgorithm a, std::uint64_t seed) {
  std::vector<std::uint64_t> out;
  generate_distinct_sectors(n, seed, kDefaultSectorSize, [&](std::span<const std::uint8_t> s) {
    out.push_back(sector_signature(s, a).value);
  });
  return out;
}

TEST(DistinctSectors, AreDistinctAndDeterministic) {
  std::set<std::vector<std::uint8_t>> seen;
  generate_distinct_sectors(2000, 3, 64, [&](std::span<const std::uint8_t> s) {
    EXPECT_TRUE(seen.emplace(s.begin(), s.end()).second);
  });
  std::vector<std::vector<std::uint8_t>> a, b;
  generate_distinct_sectors(50, 9, 512, [&](auto s) { a.emplace_back(s.begin(), s.end()); });
  generate_distinct_sectors(50, 9, 512, [&](auto s) { b.emplace_back(s.begin(), s.end()); });
  EXPECT_EQ(a, b);
}

TEST(CollisionExperiment, SingleSectorNeverCollides) {
  for (auto a : {HashAlgorithm::kDjb2, HashAlgorithm::kSdbm, HashAlgorithm::kCrc32,
                 HashAlgorithm::kCrc64}) {
    const auto r = collision_experiment(1, a, 1);
    EXPECT_EQ(r.sectors_tested, 1u);
    EXPECT_EQ(r.distinct_signatures, 1u);
    EXPECT_EQ(r.colliding_sectors, 0u);
    EXPECT_EQ(r.collision_rate, 0.0);
  }
  EXPECT_THROW(collision_experiment(0, HashAlgorithm::kDjb2, 1), std::invalid_argument);
}

TEST(CollisionExperiment, DeterministicInSeed) {
  EXPECT_EQ(collision_experiment(5000, HashAlgorithm::kCrc32, 4),
            collision_experiment(5000, HashAlgorithm::kCrc32, 4));
}

TEST(CollisionExperiment, AgreesWithSortOracle) {
  for (auto a : {HashAlgorithm::kDjb2, HashAlgorithm::kCrc32}) {
    const std::uint64_t n = 100000;
    const auto r = collision_experiment(n, a, 21);
    EXPECT_EQ(r.colliding_sectors, oracle::colliding_by_sort(signatures_of(n, a, 21)));
    EXPECT_EQ(r.collision_rate, static_cast<double>(r.colliding_sectors) / n);
  }
}

TEST(CollisionExperiment, Crc32BirthdayCollisionsAppear) {
  // 2^18 draws into 2^32 values: about 8 expected colliding pairs.
  const auto r = collision_experiment(1 << 18, HashAlgorithm::kCrc32, 5);
  EXPECT_GT(r.colliding_sectors, 0u);
  EXPECT_LT(r.colliding_sectors, 60u);
  EXPECT_EQ(r.colliding_sectors, oracle::colliding_by_sort(signatures_of(1 << 18, HashAlgorithm::kCrc32, 5)));
}

TEST(RandomFilledSet, HitsTargetOccupancy) {
  SweepOptions opts;
  opts.index_width = 10;
  const auto set = random_filled_set(0.3, HashAlgorithm::kDjb2, 2, opts);
  for (std::uint32_t t = 0; t < set.table_count(); ++t) {
    EXPECT_EQ(set.table(t).occupied_count(), 307u);
  }
}

TEST(OccupancySweep, ProbeDistanceRisesWithOccupancy) {
  SweepOptions opts;
  opts.index_width = 14;
  const auto points =
      occupancy_sweep({0.1, 0.3, 0.5, 0.7, 0.9}, 4 << 20, HashAlgorithm::kDjb2, 7, opts);
  ASSERT_EQ(points.size(), 5u);
  for (std::size_t i = 1; i < points.size(); ++i) {
    EXPECT_GT(points[i].mean_probe_distance, points[i - 1].mean_probe_distance);
    EXPECT_GT(points[i].occupancy, points[i - 1].occupancy);
  }
  for (const auto& p : points) {
    EXPECT_EQ(p.lookups, (4u << 20) / 512);
    EXPECT_GT(p.bytes_per_second, 0.0);
  }
}

TEST(OccupancySweep, ProbeCountsAreDeterministic) {
  SweepOptions opts;
  opts.index_width = 12;
  const auto a = occupancy_sweep({0.5}, 1 << 20, HashAlgorithm::kSdbm, 3, opts);
  const auto b = occupancy_sweep({0.5}, 1 << 20, HashAlgorithm::kSdbm, 3, opts);
  EXPECT_EQ(a[0].mean_probe_distance, b[0].mean_probe_distance);
}

TEST(OccupancySweep, RejectsOutOfRange) {
  EXPECT_THROW(occupancy_sweep({0.0}, 4096, HashAlgorithm::kDjb2, 1), std::invalid_argument);
  EXPECT_THROW(occupancy_sweep({1.0}, 4096, HashAlgorithm::kDjb2, 1), std::invalid_argument);
}

}  // namespace
}  // namespace sectorhash
