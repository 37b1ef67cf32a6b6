// Scan engine: reads disk images through per-source buffer pools, hashes
// full sectors in batches, looks each signature up in S_tau and confirms
// hits by comparing the sector against the master bytes.
//
// Stages and ownership:
//   reader (one per image)  --chunks-->  hash/match workers  --candidates-->
//   verifier workers  -->  results
// A reader owns a buffer until it hands the chunk off; the worker returns
// the buffer to the reader's free list when done. With two buffers per
// source, reading one overlaps hashing the other. The database is shared
// read-only.
//
// Sector geometry on the image side: sector k counts from partition_offset,
// and tau = k mod cluster_size.

#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <compare>
#include <cstdint>
#include <cstring>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

#include "sectorhash/bounded_queue.hpp"
#include "sectorhash/hashing.hpp"
#include "sectorhash/image.hpp"
#include "sectorhash/sigdb.hpp"

namespace sectorhash {

inline constexpr std::uint32_t kDefaultBatchSize = 16;
inline constexpr std::uint64_t kDefaultBufferSize = 4u << 20;

struct ScanConfig {
  std::uint32_t sector_size = kDefaultSectorSize;
  std::uint32_t cluster_size = kDefaultClusterSize;
  std::uint32_t batch_size = kDefaultBatchSize;
  std::uint64_t buffer_size = kDefaultBufferSize;
  std::uint32_t buffers_per_source = 2;
  std::uint64_t partition_offset = 0;
  bool verify = true;
  bool lookup_all_tables = false;
  unsigned hash_workers = 0;    // 0: hardware concurrency
  unsigned verify_workers = 1;

  void validate() const {
    if (sector_size == 0 || cluster_size == 0) {
      throw std::invalid_argument("sector and cluster size must be positive");
    }
    if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
    if (buffers_per_source == 0) throw std::invalid_argument("need at least one buffer per source");
    const std::uint64_t stride = std::uint64_t{sector_size} * batch_size;
    if (buffer_size == 0 || buffer_size % stride != 0) {
      throw std::invalid_argument("buffer size " + std::to_string(buffer_size) +
                                  " is not a multiple of sector size x batch size (" +
                                  std::to_string(stride) + ")");
    }
    if (partition_offset % sector_size != 0) {
      throw std::invalid_argument("partition offset must be a multiple of the sector size");
    }
  }
};

class GeometryMismatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void check_geometry(const SignatureTableSet& set, const ScanConfig& config) {
  const auto& g = set.geometry();
  if (g.sector_size != config.sector_size || g.cluster_size != config.cluster_size) {
    throw GeometryMismatchError(
        "database geometry (sector " + std::to_string(g.sector_size) + ", cluster " +
        std::to_string(g.cluster_size) + ") does not match scan configuration (sector " +
        std::to_string(config.sector_size) + ", cluster " +
        std::to_string(config.cluster_size) + ")");
  }
}

enum class MatchStatus : std::uint8_t { kCandidate, kVerified, kFalsePositive, kUnverifiable };

inline constexpr std::string_view to_string(MatchStatus s) {
  switch (s) {
    case MatchStatus::kCandidate: return "candidate";
    case MatchStatus::kVerified: return "verified";
    case MatchStatus::kFalsePositive: return "false_positive";
    case MatchStatus::kUnverifiable: return "unverifiable";
  }
  return "unknown";
}

struct MatchRecord {
  std::uint32_t image_index = 0;
  std::uint64_t image_offset = 0;
  std::uint64_t sector_index = 0;  // counted from partition_offset
  std::uint32_t tau = 0;
  SectorSignature signature;
  std::uint32_t master_file_id = 0;
  std::uint64_t master_byte_offset = 0;
  MatchStatus status = MatchStatus::kCandidate;

  friend constexpr auto operator<=>(const MatchRecord&, const MatchRecord&) = default;
};

struct ScanStats {
  std::uint64_t image_bytes = 0;
  std::uint64_t bytes_scanned = 0;   // full sectors hashed, in bytes
  std::uint64_t sectors_hashed = 0;
  std::uint64_t tail_bytes = 0;      // partial trailing sector(s), not hashed
  std::uint64_t lookups = 0;
  std::uint64_t probes = 0;          // slots examined over all lookups
  std::uint64_t candidates = 0;
  std::uint64_t verified = 0;
  std::uint64_t false_positives = 0;
  std::uint64_t unverifiable = 0;
  double elapsed_seconds = 0.0;

  double bytes_per_second() const {
    return elapsed_seconds > 0 ? static_cast<double>(bytes_scanned) / elapsed_seconds : 0.0;
  }
  /// Mean number of collisions passed per lookup (slots examined minus one).
  double mean_probe_distance() const {
    return lookups ? static_cast<double>(probes - lookups) / static_cast<double>(lookups) : 0.0;
  }
};

struct ScanResult {
  std::vector<MatchRecord> matches;  // sorted
  ScanStats stats;
};

struct ScanHooks {
  std::function<void(const MatchRecord&)> on_match;              // resolved records, any order
  std::function<void(std::uint64_t done, std::uint64_t total)> on_progress;
};

class ScanError : public std::runtime_error {
 public:
  ScanError(std::string stage, const std::string& what)
      : std::runtime_error(stage + " stage failed: " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

/// Signatures of `batch_size` consecutive sectors. Element q equals
/// sector_signature of sector q; the batch only changes the evaluation
/// order. For the multiplicative hashes, eight sectors advance in lockstep
/// one byte column at a time so their dependency chains interleave.
inline void hash_batch(std::span<const std::uint8_t> sectors, std::size_t batch_size,
                       HashAlgorithm algorithm, std::span<SectorSignature> out,
                       std::size_t sector_size = kDefaultSectorSize) {
  if (sectors.size() != batch_size * sector_size) {
    throw std::invalid_argument("batch input is " + std::to_string(sectors.size()) +
                                " bytes, expected " + std::to_string(batch_size * sector_size));
  }
  if (out.size() < batch_size) throw std::invalid_argument("batch output too small");

  auto lockstep = [&](auto multiplier) {
    constexpr std::size_t kLanes = 8;
    const std::uint64_t seed = params::describe(algorithm).init;
    std::size_t q = 0;
    for (; q + kLanes <= batch_size; q += kLanes) {
      const std::uint8_t* base = sectors.data() + q * sector_size;
      std::uint64_t acc[kLanes];
      for (auto& a : acc) a = seed;
      for (std::size_t j = 0; j < sector_size; ++j) {
        for (std::size_t k = 0; k < kLanes; ++k) {
          acc[k] = acc[k] * decltype(multiplier)::value + base[k * sector_size + j];
        }
      }
      for (std::size_t k = 0; k < kLanes; ++k) out[q + k] = SectorSignature{acc[k]};
    }
    for (; q < batch_size; ++q) {
      out[q] = hash_bytes(sectors.subspan(q * sector_size, sector_size), algorithm);
    }
  };

  switch (algorithm) {
    case HashAlgorithm::kDjb2:
      lockstep(std::integral_constant<std::uint64_t, params::kDjb2Multiplier>{});
      break;
    case HashAlgorithm::kSdbm:
      lockstep(std::integral_constant<std::uint64_t, params::kSdbmMultiplier>{});
      break;
    default:
      for (std::size_t q = 0; q < batch_size; ++q) {
        out[q] = hash_bytes(sectors.subspan(q * sector_size, sector_size), algorithm);
      }
  }
}

inline std::vector<SectorSignature> hash_batch(std::span<const std::uint8_t> sectors,
                                               std::size_t batch_size, HashAlgorithm algorithm,
                                               std::size_t sector_size = kDefaultSectorSize) {
  std::vector<SectorSignature> out(batch_size);
  hash_batch(sectors, batch_size, algorithm, out, sector_size);
  return out;
}

/// Resolves a candidate given the suspect sector's bytes.
inline MatchRecord verify_candidate(MatchRecord record, std::span<const std::uint8_t> image_sector,
                                    const MasterCorpus& corpus) {
  std::vector<std::uint8_t> master(image_sector.size());
  if (!corpus.read_sector(record.master_file_id, record.master_byte_offset, master)) {
    record.status = MatchStatus::kUnverifiable;
    return record;
  }
  record.status = std::equal(master.begin(), master.end(), image_sector.begin())
                      ? MatchStatus::kVerified
                      : MatchStatus::kFalsePositive;
  return record;
}

/// Resolves a candidate by re-reading the suspect sector from the image.
inline MatchRecord verify_candidate(MatchRecord record, const ImageSource& image,
                                    const MasterCorpus& corpus,
                                    std::size_t sector_size = kDefaultSectorSize) {
  std::vector<std::uint8_t> sector(sector_size);
  if (image.read_at(record.image_offset, sector) != sector_size) {
    record.status = MatchStatus::kUnverifiable;
    return record;
  }
  return verify_candidate(record, sector, corpus);
}

namespace detail {

struct ImageExtent {
  std::uint64_t begin = 0;  // partition_offset, clamped to size
  std::uint64_t end = 0;    // end of the last full sector
  std::uint64_t tail = 0;
};

inline ImageExtent extent_of(std::uint64_t size, const ScanConfig& config) {
  ImageExtent e;
  e.begin = std::min(config.partition_offset, size);
  const std::uint64_t usable = size - e.begin;
  e.end = e.begin + usable / config.sector_size * config.sector_size;
  e.tail = size - e.end;
  return e;
}

/// Looks up one signature and appends a candidate per hit.
inline void match_sector(const SignatureTableSet& set, const ScanConfig& config,
                         std::uint32_t image_index, std::uint64_t image_offset,
                         SectorSignature sig, std::vector<MatchRecord>& hits, ScanStats& stats) {
  const std::uint64_t sector_index = (image_offset - config.partition_offset) / config.sector_size;
  const auto tau = static_cast<std::uint32_t>(sector_index % config.cluster_size);
  auto probe = [&](std::uint32_t table) {
    const auto r = set.lookup(table, sig);
    ++stats.lookups;
    stats.probes += r.probes;
    if (!r.found) return;
    const auto& entry = set.entry(r.ref);
    hits.push_back(MatchRecord{image_index, image_offset, sector_index, tau, sig,
                               entry.master_file_id, entry.byte_offset,
                               MatchStatus::kCandidate});
  };
  if (config.lookup_all_tables) {
    for (std::uint32_t t = 0; t < set.table_count(); ++t) probe(t);
  } else {
    probe(tau);
  }
}

inline void tally(ScanStats& stats, const MatchRecord& r) {
  switch (r.status) {
    case MatchStatus::kVerified: ++stats.verified; break;
    case MatchStatus::kFalsePositive: ++stats.false_positives; break;
    case MatchStatus::kUnverifiable: ++stats.unverifiable; break;
    case MatchStatus::kCandidate: break;
  }
}

}  // namespace detail

/// Naive single-buffer scan: one sector at a time, no batching, no threads.
/// Serves as the reference the pipeline is checked against.
inline ScanResult reference_scan(const SignatureTableSet& set,
                                 const std::vector<const ImageSource*>& images,
                                 const MasterCorpus& corpus, const ScanConfig& config) {
  config.validate();
  check_geometry(set, config);
  const auto start = std::chrono::steady_clock::now();
  ScanResult result;
  auto& stats = result.stats;
  std::vector<std::uint8_t> sector(config.sector_size);
  for (std::uint32_t i = 0; i < images.size(); ++i) {
    const auto& image = *images[i];
    const auto ext = detail::extent_of(image.size(), config);
    stats.image_bytes += image.size();
    stats.tail_bytes += ext.tail;
    for (std::uint64_t off = ext.begin; off < ext.end; off += config.sector_size) {
      if (image.read_at(off, sector) != sector.size()) {
        throw ScanError("reader", "short read in " + image.name());
      }
      const auto sig = sector_signature(sector, set.algorithm(), config.sector_size);
      ++stats.sectors_hashed;
      std::vector<MatchRecord> hits;
      detail::match_sector(set, config, i, off, sig, hits, stats);
      for (auto& hit : hits) {
        ++stats.candidates;
        if (config.verify) hit = verify_candidate(hit, image, corpus, config.sector_size);
        detail::tally(stats, hit);
        result.matches.push_back(hit);
      }
    }
  }
  stats.bytes_scanned = stats.sectors_hashed * config.sector_size;
  stats.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::sort(result.matches.begin(), result.matches.end());
  return result;
}

/// Pipelined scan of several images sharing one database.
inline ScanResult scan_images(const SignatureTableSet& set,
                              const std::vector<const ImageSource*>& images,
                              const MasterCorpus& corpus, const ScanConfig& config,
                              const ScanHooks& hooks = {}) {
  config.validate();
  check_geometry(set, config);
  const auto start = std::chrono::steady_clock::now();

  struct Chunk {
    std::uint32_t source = 0;
    std::uint32_t buffer = 0;
    std::uint64_t offset = 0;
    std::size_t length = 0;
  };
  struct Candidate {
    MatchRecord record;
    std::vector<std::uint8_t> sector;
  };
  struct Source {
    std::vector<std::vector<std::uint8_t>> buffers;
    std::unique_ptr<BoundedQueue<std::uint32_t>> free;
    detail::ImageExtent extent;
  };

  std::vector<Source> sources(images.size());
  std::size_t total_buffers = 0;
  std::uint64_t total_bytes = 0;
  ScanResult result;
  for (std::size_t i = 0; i < images.size(); ++i) {
    auto& s = sources[i];
    s.extent = detail::extent_of(images[i]->size(), config);
    result.stats.image_bytes += images[i]->size();
    result.stats.tail_bytes += s.extent.tail;
    total_bytes += s.extent.end - s.extent.begin;
    const auto span = s.extent.end - s.extent.begin;
    const auto buf_len = static_cast<std::size_t>(std::min<std::uint64_t>(config.buffer_size, span));
    s.buffers.assign(config.buffers_per_source, std::vector<std::uint8_t>(buf_len));
    s.free = std::make_unique<BoundedQueue<std::uint32_t>>(config.buffers_per_source);
    for (std::uint32_t b = 0; b < config.buffers_per_source; ++b) s.free->push(b);
    total_buffers += config.buffers_per_source;
  }

  BoundedQueue<Chunk> work(total_buffers);
  BoundedQueue<Candidate> to_verify(1024);
  std::mutex out_mu;
  std::atomic<bool> aborted{false};
  std::atomic<std::uint64_t> done_bytes{0};
  std::mutex error_mu;
  std::optional<ScanError> first_error;

  auto fail = [&](const std::string& stage, const std::string& what) {
    {
      std::lock_guard lock(error_mu);
      if (!first_error) first_error.emplace(stage, what);
    }
    aborted = true;
    work.close();
    to_verify.close();
    for (auto& s : sources) s.free->close();
  };

  auto emit = [&](const MatchRecord& r) {
    std::lock_guard lock(out_mu);
    ++result.stats.candidates;
    detail::tally(result.stats, r);
    result.matches.push_back(r);
    if (hooks.on_match) hooks.on_match(r);
  };

  auto reader = [&](std::uint32_t i) {
    try {
      auto& s = sources[i];
      for (std::uint64_t off = s.extent.begin; off < s.extent.end && !aborted;) {
        auto buffer = s.free->pop();
        if (!buffer) return;
        const auto len = static_cast<std::size_t>(
            std::min<std::uint64_t>(s.buffers[*buffer].size(), s.extent.end - off));
        const auto got = images[i]->read_at(off, std::span(s.buffers[*buffer]).first(len));
        if (got != len) throw IoError("short read in " + images[i]->name());
        if (!work.push(Chunk{i, *buffer, off, len})) return;
        off += len;
      }
    } catch (const std::exception& e) {
      fail("reader", e.what());
    }
  };

  std::mutex stats_mu;
  auto hasher = [&] {
    try {
      ScanStats local;
      std::vector<SectorSignature> sigs(config.batch_size);
      std::vector<MatchRecord> hits;
      while (auto chunk = work.pop()) {
        if (aborted) break;
        auto& s = sources[chunk->source];
        const std::span<const std::uint8_t> data =
            std::span(s.buffers[chunk->buffer]).first(chunk->length);
        const std::size_t sectors = chunk->length / config.sector_size;
        for (std::size_t q0 = 0; q0 < sectors; q0 += config.batch_size) {
          const std::size_t n = std::min<std::size_t>(config.batch_size, sectors - q0);
          hash_batch(data.subspan(q0 * config.sector_size, n * config.sector_size), n,
                     set.algorithm(), sigs, config.sector_size);
          for (std::size_t q = 0; q < n; ++q) {
            hits.clear();
            const std::uint64_t off = chunk->offset + (q0 + q) * config.sector_size;
            detail::match_sector(set, config, chunk->source, off, sigs[q], hits, local);
            for (const auto& hit : hits) {
              if (!config.verify) {
                emit(hit);
                continue;
              }
              const auto bytes = data.subspan((q0 + q) * config.sector_size, config.sector_size);
              if (!to_verify.push(Candidate{hit, {bytes.begin(), bytes.end()}})) return;
            }
          }
        }
        local.sectors_hashed += sectors;
        s.free->push(chunk->buffer);
        const auto done = done_bytes += chunk->length;
        if (hooks.on_progress) {
          std::lock_guard lock(out_mu);
          hooks.on_progress(done, total_bytes);
        }
      }
      std::lock_guard lock(stats_mu);
      result.stats.sectors_hashed += local.sectors_hashed;
      result.stats.lookups += local.lookups;
      result.stats.probes += local.probes;
    } catch (const std::exception& e) {
      fail("hasher", e.what());
    }
  };

  auto verifier = [&] {
    try {
      while (auto c = to_verify.pop()) {
        if (aborted) break;
        emit(verify_candidate(c->record, c->sector, corpus));
      }
    } catch (const std::exception& e) {
      fail("verifier", e.what());
    }
  };

  const unsigned n_hashers =
      config.hash_workers ? config.hash_workers : std::max(1u, std::thread::hardware_concurrency());
  const unsigned n_verifiers = std::max(1u, config.verify_workers);

  std::vector<std::thread> readers;
  std::vector<std::thread> hashers;
  std::vector<std::thread> verifiers;
  for (std::uint32_t i = 0; i < images.size(); ++i) readers.emplace_back(reader, i);
  for (unsigned k = 0; k < n_hashers; ++k) hashers.emplace_back(hasher);
  if (config.verify) {
    for (unsigned k = 0; k < n_verifiers; ++k) verifiers.emplace_back(verifier);
  }

  for (auto& t : readers) t.join();
  work.close();
  for (auto& t : hashers) t.join();
  to_verify.close();
  for (auto& t : verifiers) t.join();

  if (first_error) throw *first_error;

  result.stats.bytes_scanned = result.stats.sectors_hashed * config.sector_size;
  result.stats.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::sort(result.matches.begin(), result.matches.end());
  return result;
}

inline ScanResult scan_image(const SignatureTableSet& set, const ImageSource& image,
                             const MasterCorpus& corpus, const ScanConfig& config,
                             const ScanHooks& hooks = {}) {
  return scan_images(set, {&image}, corpus, config, hooks);
}

}  // namespace sectorhash
