// Position-indexed signature database.
//
// A SignatureTableSet holds one open-addressing table per within-cluster
// sector position tau. Each table has 2^w slots; a signature h is placed by
// linear probing starting at the w low bits of h:
//
//   l_0 = LSB_w(h),  l_c = LSB_w(l_{c-1} + 1)
//
// Occupancy is tracked in a bitmap, so every 64-bit pattern (including 0) is
// a legal signature. Tables never resize and never delete.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sectorhash/hashing.hpp"
#include "sectorhash/manifest.hpp"

namespace sectorhash {

inline constexpr unsigned kMinIndexWidth = 1;
inline constexpr unsigned kMaxIndexWidth = 30;
inline constexpr unsigned kDefaultIndexWidth = 22;
inline constexpr std::uint32_t kDefaultClusterSize = 8;
inline constexpr std::uint32_t kMaxClusterSize = 64;

/// Where a stored signature came from. byte_offset is sector aligned and
/// tau = (byte_offset / sector_size) mod cluster_size.
struct MasterIndexEntry {
  std::uint32_t master_file_id = 0;
  std::uint32_t tau = 0;
  std::uint64_t byte_offset = 0;

  friend constexpr bool operator==(const MasterIndexEntry&, const MasterIndexEntry&) = default;
};

enum class InsertStatus { kInserted, kDuplicate, kFull };

struct InsertResult {
  InsertStatus status = InsertStatus::kFull;
  std::uint64_t slot = 0;            // slot written, or slot already holding h
  std::uint64_t probe_distance = 0;  // collisions before reaching slot
  std::uint32_t ref = 0;             // ref stored at slot
};

struct LookupResult {
  bool found = false;
  std::uint64_t slot = 0;
  std::uint64_t probes = 0;  // slots examined, >= 1
  std::uint32_t ref = 0;
};

class SignatureTable {
 public:
  explicit SignatureTable(unsigned index_width)
      : width_(check_width(index_width)),
        mask_((std::uint64_t{1} << index_width) - 1),
        signatures_(std::size_t{1} << index_width, 0),
        refs_(std::size_t{1} << index_width, 0),
        bitmap_(((std::size_t{1} << index_width) + 63) / 64, 0) {}

  unsigned index_width() const { return width_; }
  std::uint64_t capacity() const { return mask_ + 1; }
  std::uint64_t occupied_count() const { return occupied_; }
  bool full() const { return occupied_ == capacity(); }
  double occupancy() const {
    return static_cast<double>(occupied_) / static_cast<double>(capacity());
  }

  std::uint64_t home_slot(SectorSignature h) const { return h.value & mask_; }

  bool occupied(std::uint64_t slot) const {
    return (bitmap_[slot >> 6] >> (slot & 63)) & 1;
  }
  SectorSignature signature_at(std::uint64_t slot) const { return {signatures_[slot]}; }
  std::uint32_t ref_at(std::uint64_t slot) const { return refs_[slot]; }

  InsertResult insert(SectorSignature h, std::uint32_t ref) {
    if (full()) {
      const auto hit = lookup(h);
      if (hit.found) return {InsertStatus::kDuplicate, hit.slot, hit.probes - 1, hit.ref};
      return {InsertStatus::kFull, 0, 0, 0};
    }
    std::uint64_t slot = home_slot(h);
    for (std::uint64_t c = 0;; ++c) {
      if (!occupied(slot)) {
        bitmap_[slot >> 6] |= std::uint64_t{1} << (slot & 63);
        signatures_[slot] = h.value;
        refs_[slot] = ref;
        ++occupied_;
        return {InsertStatus::kInserted, slot, c, ref};
      }
      if (signatures_[slot] == h.value) return {InsertStatus::kDuplicate, slot, c, refs_[slot]};
      slot = (slot + 1) & mask_;
    }
  }

  /// Probes until h or an empty slot is found. A full table without h is
  /// answered absent after 2^w probes.
  LookupResult lookup(SectorSignature h) const {
    std::uint64_t slot = home_slot(h);
    const std::uint64_t limit = capacity();
    for (std::uint64_t probes = 1; probes <= limit; ++probes) {
      if (!occupied(slot)) return {false, slot, probes, 0};
      if (signatures_[slot] == h.value) return {true, slot, probes, refs_[slot]};
      slot = (slot + 1) & mask_;
    }
    return {false, 0, limit, 0};
  }

  // Raw storage, used by the file codec.
  std::span<const std::uint64_t> raw_signatures() const { return signatures_; }
  std::span<const std::uint32_t> raw_refs() const { return refs_; }
  std::span<const std::uint64_t> raw_bitmap() const { return bitmap_; }
  std::span<std::uint64_t> raw_signatures() { return signatures_; }
  std::span<std::uint32_t> raw_refs() { return refs_; }
  std::span<std::uint64_t> raw_bitmap() { return bitmap_; }
  void set_occupied_count(std::uint64_t n) { occupied_ = n; }

  friend bool operator==(const SignatureTable&, const SignatureTable&) = default;

 private:
  static unsigned check_width(unsigned w) {
    if (w < kMinIndexWidth || w > kMaxIndexWidth) {
      throw std::invalid_argument("index width must be in [" + std::to_string(kMinIndexWidth) +
                                  ", " + std::to_string(kMaxIndexWidth) + "], got " +
                                  std::to_string(w));
    }
    return w;
  }

  unsigned width_;
  std::uint64_t mask_;
  std::uint64_t occupied_ = 0;
  std::vector<std::uint64_t> signatures_;
  std::vector<std::uint32_t> refs_;
  std::vector<std::uint64_t> bitmap_;
};

struct Geometry {
  HashAlgorithm algorithm = HashAlgorithm::kDjb2;
  unsigned index_width = kDefaultIndexWidth;
  std::uint32_t sector_size = kDefaultSectorSize;
  std::uint32_t cluster_size = kDefaultClusterSize;

  friend constexpr bool operator==(const Geometry&, const Geometry&) = default;
};

/// Raised when S_tau has no free slot left. The database must be rebuilt
/// with a larger index width.
class TableFullError : public std::runtime_error {
 public:
  TableFullError(std::uint32_t tau, unsigned index_width)
      : std::runtime_error("signature table S_" + std::to_string(tau) + " is full (2^" +
                           std::to_string(index_width) +
                           " slots); rebuild with a larger index width"),
        tau_(tau) {}
  std::uint32_t tau() const { return tau_; }

 private:
  std::uint32_t tau_;
};

struct OccupancyReport {
  std::vector<double> per_table;
  double aggregate = 0.0;
};

class SignatureTableSet {
 public:
  explicit SignatureTableSet(Geometry geometry) : geometry_(check(geometry)) {
    tables_.reserve(geometry_.cluster_size);
    for (std::uint32_t t = 0; t < geometry_.cluster_size; ++t) {
      tables_.emplace_back(geometry_.index_width);
    }
  }

  const Geometry& geometry() const { return geometry_; }
  HashAlgorithm algorithm() const { return geometry_.algorithm; }
  std::uint32_t table_count() const { return geometry_.cluster_size; }
  const SignatureTable& table(std::uint32_t tau) const { return tables_.at(tau); }
  SignatureTable& table(std::uint32_t tau) { return tables_.at(tau); }

  const std::vector<MasterIndexEntry>& entries() const { return entries_; }
  std::vector<MasterIndexEntry>& entries() { return entries_; }
  const MasterIndexEntry& entry(std::uint32_t ref) const { return entries_.at(ref); }

  const CorpusManifest& manifest() const { return manifest_; }
  CorpusManifest& manifest() { return manifest_; }

  std::uint32_t tau_of_offset(std::uint64_t byte_offset) const {
    return static_cast<std::uint32_t>((byte_offset / geometry_.sector_size) %
                                      geometry_.cluster_size);
  }

  /// Inserts a precomputed signature into S_tau with its provenance. On a
  /// duplicate the first provenance is kept and `entry` is discarded.
  InsertResult insert_signature(std::uint32_t tau, SectorSignature h,
                                const MasterIndexEntry& entry) {
    auto& t = tables_.at(tau);
    if (entries_.size() >= UINT32_MAX) throw std::length_error("too many master entries");
    const auto ref = static_cast<std::uint32_t>(entries_.size());
    auto result = t.insert(h, ref);
    if (result.status == InsertStatus::kFull) throw TableFullError(tau, geometry_.index_width);
    if (result.status == InsertStatus::kInserted) entries_.push_back(entry);
    return result;
  }

  /// Hashes one master sector and inserts it into S_tau, tau derived from
  /// its file-relative offset.
  InsertResult insert_master_sector(std::span<const std::uint8_t> sector,
                                    std::uint32_t file_id, std::uint64_t byte_offset) {
    if (byte_offset % geometry_.sector_size != 0) {
      throw std::invalid_argument("master byte offset " + std::to_string(byte_offset) +
                                  " is not sector aligned");
    }
    const auto h = sector_signature(sector, geometry_.algorithm, geometry_.sector_size);
    const auto tau = tau_of_offset(byte_offset);
    return insert_signature(tau, h, MasterIndexEntry{file_id, tau, byte_offset});
  }

  LookupResult lookup(std::uint32_t tau, SectorSignature h) const {
    return tables_.at(tau).lookup(h);
  }

  OccupancyReport occupancy() const {
    OccupancyReport r;
    std::uint64_t occupied = 0;
    std::uint64_t capacity = 0;
    for (const auto& t : tables_) {
      r.per_table.push_back(t.occupancy());
      occupied += t.occupied_count();
      capacity += t.capacity();
    }
    r.aggregate = static_cast<double>(occupied) / static_cast<double>(capacity);
    return r;
  }

  friend bool operator==(const SignatureTableSet&, const SignatureTableSet&) = default;

 private:
  static Geometry check(Geometry g) {
    if (!is_valid_algorithm(static_cast<std::uint32_t>(g.algorithm))) {
      throw std::invalid_argument("unknown hash algorithm");
    }
    if (g.sector_size == 0) throw std::invalid_argument("sector size must be positive");
    if (g.cluster_size == 0 || g.cluster_size > kMaxClusterSize) {
      throw std::invalid_argument("cluster size must be in [1, " +
                                  std::to_string(kMaxClusterSize) + "]");
    }
    return g;
  }

  Geometry geometry_;
  std::vector<SignatureTable> tables_;
  std::vector<MasterIndexEntry> entries_;
  CorpusManifest manifest_;
};

}  // namespace sectorhash
