// Desk-scale measurement harnesses: signature collisions over distinct
// random sectors, and scan throughput / probe distance versus table
// occupancy.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "sectorhash/hashing.hpp"
#include "sectorhash/image.hpp"
#include "sectorhash/scanner.hpp"
#include "sectorhash/sigdb.hpp"

namespace sectorhash {

struct CollisionReport {
  std::uint64_t sectors_tested = 0;
  std::uint64_t distinct_signatures = 0;
  std::uint64_t colliding_sectors = 0;  // sectors whose signature is shared
  double collision_rate = 0.0;

  friend bool operator==(const CollisionReport&, const CollisionReport&) = default;
};

namespace detail {

struct PairHash {
  std::size_t operator()(const std::pair<std::uint64_t, std::uint64_t>& p) const {
    return std::hash<std::uint64_t>{}(p.first * 0x9E3779B97F4A7C15ull ^ p.second);
  }
};

inline void fill_random(std::mt19937_64& rng, std::span<std::uint8_t> out) {
  std::size_t i = 0;
  for (; i + 8 <= out.size(); i += 8) {
    const auto v = rng();
    for (int b = 0; b < 8; ++b) out[i + b] = static_cast<std::uint8_t>(v >> (8 * b));
  }
  if (i < out.size()) {
    const auto v = rng();
    const std::size_t tail = out.size() - i;
    for (std::size_t b = 0; b < tail && b < 8; ++b) out[i + b] = static_cast<std::uint8_t>(v >> (8 * b));
  }
}

}  // namespace detail

/// Calls `visit` with n pseudo-random sectors that are pairwise distinct:
/// no two share their first 16 bytes (a sector whose prefix was already
/// seen is redrawn). Deterministic in (n, seed, sector_size).
inline void generate_distinct_sectors(std::uint64_t n, std::uint64_t seed,
                                      std::size_t sector_size,
                                      const std::function<void(std::span<const std::uint8_t>)>& visit) {
  if (sector_size < 16) throw std::invalid_argument("sector size must be at least 16 bytes");
  std::mt19937_64 rng(seed);
  std::unordered_set<std::pair<std::uint64_t, std::uint64_t>, detail::PairHash> prefixes;
  prefixes.reserve(static_cast<std::size_t>(n));
  std::vector<std::uint8_t> sector(sector_size);
  for (std::uint64_t i = 0; i < n; ++i) {
    std::pair<std::uint64_t, std::uint64_t> prefix;
    do {
      detail::fill_random(rng, sector);
      prefix = {detail::load_le64(sector.data()), detail::load_le64(sector.data() + 8)};
    } while (!prefixes.insert(prefix).second);
    visit(sector);
  }
}

inline CollisionReport collision_experiment(std::uint64_t n_sectors, HashAlgorithm algorithm,
                                            std::uint64_t seed,
                                            std::size_t sector_size = kDefaultSectorSize) {
  if (n_sectors == 0) throw std::invalid_argument("need at least one sector");
  std::unordered_map<std::uint64_t, std::uint32_t> counts;
  counts.reserve(static_cast<std::size_t>(n_sectors));
  generate_distinct_sectors(n_sectors, seed, sector_size, [&](auto sector) {
    ++counts[sector_signature(sector, algorithm, sector_size).value];
  });
  CollisionReport r;
  r.sectors_tested = n_sectors;
  r.distinct_signatures = counts.size();
  for (const auto& [sig, count] : counts) {
    if (count > 1) r.colliding_sectors += count;
  }
  r.collision_rate = static_cast<double>(r.colliding_sectors) / static_cast<double>(n_sectors);
  return r;
}

struct ThroughputPoint {
  double target_occupancy = 0.0;
  double occupancy = 0.0;  // achieved, aggregate over all tables
  double bytes_per_second = 0.0;
  double mean_probe_distance = 0.0;
  std::uint64_t lookups = 0;
};

struct SweepOptions {
  unsigned index_width = 20;
  std::uint32_t cluster_size = kDefaultClusterSize;
  std::uint32_t sector_size = kDefaultSectorSize;
  unsigned runs = 1;  // throughput is the median over runs
  ScanConfig scan;    // geometry fields are overwritten from the options
};

/// Fills every table of a fresh set with uniform random signatures up to
/// round(occupancy * 2^w) entries. All slots share one placeholder master
/// entry.
inline SignatureTableSet random_filled_set(double occupancy, HashAlgorithm algorithm,
                                           std::uint64_t seed, const SweepOptions& options) {
  SignatureTableSet set(
      Geometry{algorithm, options.index_width, options.sector_size, options.cluster_size});
  set.manifest().add("<random>", 0);
  set.entries().push_back(MasterIndexEntry{0, 0, 0});
  std::mt19937_64 rng(seed);
  for (std::uint32_t t = 0; t < set.table_count(); ++t) {
    auto& table = set.table(t);
    const auto target = static_cast<std::uint64_t>(
        std::llround(occupancy * static_cast<double>(table.capacity())));
    while (table.occupied_count() < target) table.insert(SectorSignature{rng()}, 0);
  }
  return set;
}

inline std::vector<ThroughputPoint> occupancy_sweep(const std::vector<double>& occupancies,
                                                    std::uint64_t image_size,
                                                    HashAlgorithm algorithm, std::uint64_t seed,
                                                    const SweepOptions& options = {}) {
  for (double o : occupancies) {
    if (!(o > 0.0 && o < 1.0)) throw std::invalid_argument("occupancy must lie in (0, 1)");
  }
  std::vector<std::uint8_t> image_bytes(image_size / options.sector_size * options.sector_size);
  {
    std::mt19937_64 rng(seed ^ 0xA5A5A5A5A5A5A5A5ull);
    detail::fill_random(rng, image_bytes);
  }
  const MemoryImageSource image(std::move(image_bytes), "<sweep image>");
  const MemoryCorpus corpus;
  ScanConfig config = options.scan;
  config.sector_size = options.sector_size;
  config.cluster_size = options.cluster_size;

  std::vector<ThroughputPoint> points;
  for (std::size_t i = 0; i < occupancies.size(); ++i) {
    const auto set = random_filled_set(occupancies[i], algorithm, seed + i, options);
    ThroughputPoint p;
    p.target_occupancy = occupancies[i];
    p.occupancy = set.occupancy().aggregate;
    std::vector<double> rates;
    for (unsigned run = 0; run < std::max(1u, options.runs); ++run) {
      const auto result = scan_image(set, image, corpus, config);
      rates.push_back(result.stats.bytes_per_second());
      p.mean_probe_distance = result.stats.mean_probe_distance();
      p.lookups = result.stats.lookups;
    }
    std::sort(rates.begin(), rates.end());
    const auto mid = rates.size() / 2;
    p.bytes_per_second = rates.size() % 2 ? rates[mid] : (rates[mid - 1] + rates[mid]) / 2;
    points.push_back(p);
  }
  return points;
}

}  // namespace sectorhash
