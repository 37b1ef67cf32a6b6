// Sectorizes master files and populates a SignatureTableSet.
//
// Files are read and hashed by parallel workers; insertion happens on the
// calling thread in corpus order, so the resulting set (and its file) is the
// same as a sequential ingest.

#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <future>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "sectorhash/sigdb.hpp"

namespace sectorhash {

struct SkipRules {
  bool skip_zero = true;
  bool skip_ff = true;
};

enum class SkipReason { kKeep, kAllZero, kAllFF };

inline constexpr std::string_view to_string(SkipReason r) {
  switch (r) {
    case SkipReason::kKeep: return "keep";
    case SkipReason::kAllZero: return "all-zero";
    case SkipReason::kAllFF: return "all-0xff";
  }
  return "unknown";
}

inline SkipReason apply_skip_rules(std::span<const std::uint8_t> sector, const SkipRules& rules) {
  if (sector.empty()) return SkipReason::kKeep;
  const auto first = sector.front();
  if (first != 0x00 && first != 0xFF) return SkipReason::kKeep;
  if (!std::all_of(sector.begin(), sector.end(), [first](auto b) { return b == first; })) {
    return SkipReason::kKeep;
  }
  if (first == 0x00 && rules.skip_zero) return SkipReason::kAllZero;
  if (first == 0xFF && rules.skip_ff) return SkipReason::kAllFF;
  return SkipReason::kKeep;
}

struct FileIngestStats {
  std::uint32_t master_file_id = 0;
  std::string path;
  std::uint64_t size_bytes = 0;
  std::uint64_t sectors_ingested = 0;  // passed skip rules, including duplicates
  std::uint64_t sectors_skipped = 0;   // rejected by skip rules
  std::uint64_t skipped_zero = 0;
  std::uint64_t skipped_ff = 0;
  std::uint64_t duplicates = 0;        // ingested but already present in S_tau
  std::uint64_t trailing_bytes = 0;    // partial last sector, never hashed
  bool failed = false;
  std::string error;
};

struct IngestOptions {
  SkipRules skip;
  unsigned threads = 0;  // 0: hardware concurrency
};

namespace detail {

struct HashedSector {
  SectorSignature signature;
  SkipReason skip = SkipReason::kKeep;
};

struct HashedFile {
  std::uint64_t size_bytes = 0;
  std::vector<HashedSector> sectors;
  std::uint64_t trailing_bytes = 0;
  bool failed = false;
  std::string error;
};

inline HashedFile hash_master_file(const std::filesystem::path& path, const Geometry& g,
                                   const SkipRules& rules) {
  HashedFile out;
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    out.failed = true;
    out.error = "cannot open " + path.string();
    return out;
  }
  std::vector<std::uint8_t> sector(g.sector_size);
  while (true) {
    is.read(reinterpret_cast<char*>(sector.data()), g.sector_size);
    const auto got = static_cast<std::uint64_t>(is.gcount());
    out.size_bytes += got;
    if (got < g.sector_size) {
      out.trailing_bytes = got;
      break;
    }
    const auto reason = apply_skip_rules(sector, rules);
    out.sectors.push_back(
        {reason == SkipReason::kKeep ? hash_bytes(sector, g.algorithm) : SectorSignature{},
         reason});
  }
  if (is.bad()) {
    out.failed = true;
    out.error = "read error in " + path.string();
  }
  return out;
}

inline FileIngestStats insert_hashed_file(SignatureTableSet& set, const HashedFile& file,
                                          std::uint32_t file_id, std::string path) {
  FileIngestStats stats;
  stats.master_file_id = file_id;
  stats.path = std::move(path);
  stats.size_bytes = file.size_bytes;
  stats.trailing_bytes = file.trailing_bytes;
  stats.failed = file.failed;
  stats.error = file.error;
  if (file.failed) return stats;
  const auto sector_size = set.geometry().sector_size;
  for (std::size_t j = 0; j < file.sectors.size(); ++j) {
    const auto& s = file.sectors[j];
    if (s.skip != SkipReason::kKeep) {
      ++stats.sectors_skipped;
      (s.skip == SkipReason::kAllZero ? stats.skipped_zero : stats.skipped_ff)++;
      continue;
    }
    const std::uint64_t offset = j * std::uint64_t{sector_size};
    const auto tau = set.tau_of_offset(offset);
    const auto r = set.insert_signature(tau, s.signature, MasterIndexEntry{file_id, tau, offset});
    ++stats.sectors_ingested;
    if (r.status == InsertStatus::kDuplicate) ++stats.duplicates;
  }
  return stats;
}

}  // namespace detail

/// Ingests one file as consecutive sectors from offset 0; sector j lands in
/// S_{j mod cluster_size}. I/O errors are reported in the stats, a full
/// table throws TableFullError.
inline FileIngestStats ingest_file(SignatureTableSet& set, const std::filesystem::path& path,
                                   std::uint32_t file_id, const SkipRules& rules = {}) {
  const auto hashed = detail::hash_master_file(path, set.geometry(), rules);
  return detail::insert_hashed_file(set, hashed, file_id, path.string());
}

/// Expands directories recursively (regular files only) and sorts the
/// result so the corpus order does not depend on directory iteration order.
inline std::vector<std::filesystem::path> expand_corpus(
    const std::vector<std::filesystem::path>& inputs) {
  std::vector<std::filesystem::path> files;
  for (const auto& in : inputs) {
    if (std::filesystem::is_directory(in)) {
      std::vector<std::filesystem::path> found;
      for (const auto& e : std::filesystem::recursive_directory_iterator(in)) {
        if (e.is_regular_file()) found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      files.push_back(in);
    }
  }
  return files;
}

struct IngestReport {
  std::vector<FileIngestStats> files;
  std::uint64_t sectors_ingested = 0;
  std::uint64_t sectors_skipped = 0;
  std::uint64_t duplicates = 0;
  std::uint64_t failed_files = 0;
};

/// Ingests `files` in order, assigning ids from the set's current manifest
/// size. `manifest_paths[i]` is what gets recorded for files[i] (typically
/// a path relative to the database); empty means files[i] as given.
inline IngestReport ingest_corpus(SignatureTableSet& set,
                                  const std::vector<std::filesystem::path>& files,
                                  const IngestOptions& options = {},
                                  const std::vector<std::string>& manifest_paths = {}) {
  IngestReport report;
  const unsigned threads =
      options.threads ? options.threads : std::max(1u, std::thread::hardware_concurrency());
  const std::size_t window = std::size_t{threads} * 2;
  const Geometry geometry = set.geometry();
  const SkipRules rules = options.skip;

  std::deque<std::future<detail::HashedFile>> in_flight;
  std::size_t next = 0;
  auto launch = [&] {
    while (next < files.size() && in_flight.size() < window) {
      in_flight.push_back(std::async(std::launch::async, detail::hash_master_file, files[next],
                                     geometry, rules));
      ++next;
    }
  };

  for (std::size_t i = 0; i < files.size(); ++i) {
    launch();
    auto hashed = in_flight.front().get();
    in_flight.pop_front();
    std::string recorded = i < manifest_paths.size() && !manifest_paths[i].empty()
                               ? manifest_paths[i]
                               : files[i].generic_string();
    const auto id = set.manifest().add(recorded, hashed.size_bytes);
    auto stats = detail::insert_hashed_file(set, hashed, id, files[i].string());
    auto& m = set.manifest().entries[id];
    m.sectors_ingested = stats.sectors_ingested;
    m.sectors_skipped = stats.sectors_skipped;
    report.sectors_ingested += stats.sectors_ingested;
    report.sectors_skipped += stats.sectors_skipped;
    report.duplicates += stats.duplicates;
    report.failed_files += stats.failed ? 1 : 0;
    report.files.push_back(std::move(stats));
  }
  return report;
}

}  // namespace sectorhash
