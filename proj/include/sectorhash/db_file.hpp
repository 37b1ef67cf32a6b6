// On-disk format of a SignatureTableSet. Little-endian throughout; see
// docs/FORMATS.md for the byte layout.
//
// The checksum is CRC64 (the same parameters as HashAlgorithm::kCrc64) over
// the whole file with the checksum field itself set to zero. Saving writes
// to a temporary file that is renamed into place, so a failed save leaves
// no output; loading builds into a local set, so a failed load returns
// nothing.

#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include "sectorhash/hashing.hpp"
#include "sectorhash/sigdb.hpp"

namespace sectorhash {

inline constexpr std::array<char, 8> kDbMagic = {'S', 'H', 'S', 'I', 'G', 'D', 'B', '\0'};
inline constexpr std::uint32_t kDbFormatVersion = 1;
inline constexpr std::size_t kDbFixedHeaderSize = 88;
inline constexpr std::size_t kDbChecksumOffset = 80;

enum class DbErrorKind {
  kIo,
  kBadMagic,
  kUnsupportedVersion,
  kTruncated,
  kChecksumMismatch,
  kCorrupt,
};

inline constexpr std::string_view to_string(DbErrorKind kind) {
  switch (kind) {
    case DbErrorKind::kIo: return "io error";
    case DbErrorKind::kBadMagic: return "bad magic";
    case DbErrorKind::kUnsupportedVersion: return "unsupported version";
    case DbErrorKind::kTruncated: return "truncated";
    case DbErrorKind::kChecksumMismatch: return "checksum mismatch";
    case DbErrorKind::kCorrupt: return "corrupt";
  }
  return "unknown";
}

class DbFormatError : public std::runtime_error {
 public:
  DbFormatError(DbErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
  DbErrorKind kind() const { return kind_; }

 private:
  DbErrorKind kind_;
};

namespace detail {

class Crc64Sink {
 public:
  void write(const void* p, std::size_t n) {
    crc_ = crc64_update(crc_, static_cast<const std::uint8_t*>(p), n);
  }
  std::uint64_t value() const { return crc_ ^ params::kCrc64XorOut; }

 private:
  std::uint64_t crc_ = params::kCrc64Init;
};

class StreamSink {
 public:
  explicit StreamSink(std::ostream& os) : os_(os) {}
  void write(const void* p, std::size_t n) {
    os_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  }

 private:
  std::ostream& os_;
};

template <typename T>
void store_le(std::uint8_t* out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

template <typename T>
T load_le(const std::uint8_t* in) {
  T v = 0;
  for (std::size_t i = sizeof(T); i-- > 0;) v = static_cast<T>((v << 8) | in[i]);
  return v;
}

template <typename Sink, typename T>
void put(Sink& sink, T v) {
  std::uint8_t buf[sizeof(T)];
  store_le(buf, v);
  sink.write(buf, sizeof(T));
}

template <typename Sink, typename T>
void put_array(Sink& sink, std::span<const T> values) {
  if constexpr (std::endian::native == std::endian::little) {
    sink.write(values.data(), values.size_bytes());
  } else {
    std::vector<std::uint8_t> buf;
    constexpr std::size_t kChunk = 4096;
    for (std::size_t i = 0; i < values.size(); i += kChunk) {
      const auto n = std::min(kChunk, values.size() - i);
      buf.resize(n * sizeof(T));
      for (std::size_t k = 0; k < n; ++k) store_le(buf.data() + k * sizeof(T), values[i + k]);
      sink.write(buf.data(), buf.size());
    }
  }
}

inline std::uint64_t payload_size(const SignatureTableSet& set) {
  const auto& g = set.geometry();
  const std::uint64_t slots = std::uint64_t{1} << g.index_width;
  const std::uint64_t per_table = ((slots + 63) / 64) * 8 + slots * 8 + slots * 4;
  std::uint64_t size = per_table * g.cluster_size + set.entries().size() * 16;
  for (const auto& m : set.manifest().entries) size += 32 + m.path.size();
  return size;
}

// Unoccupied slots are written as zero so that two sets with equal content
// serialize to equal bytes.
template <typename Sink>
void serialize(const SignatureTableSet& set, std::uint64_t checksum, Sink& sink) {
  const auto& g = set.geometry();
  const auto desc = params::describe(g.algorithm);
  std::array<std::uint8_t, kDbFixedHeaderSize> h{};
  std::memcpy(h.data(), kDbMagic.data(), kDbMagic.size());
  store_le<std::uint32_t>(h.data() + 8, kDbFormatVersion);
  store_le<std::uint32_t>(h.data() + 12, static_cast<std::uint32_t>(g.algorithm));
  store_le<std::uint32_t>(h.data() + 16, g.index_width);
  store_le<std::uint32_t>(h.data() + 20, g.sector_size);
  store_le<std::uint32_t>(h.data() + 24, g.cluster_size);
  store_le<std::uint32_t>(h.data() + 28,
                          static_cast<std::uint32_t>(kDbFixedHeaderSize + 8 * g.cluster_size));
  store_le<std::uint64_t>(h.data() + 32, desc.multiplier_or_poly);
  store_le<std::uint64_t>(h.data() + 40, desc.init);
  store_le<std::uint64_t>(h.data() + 48, desc.xor_out);
  store_le<std::uint64_t>(h.data() + 56, set.entries().size());
  store_le<std::uint64_t>(h.data() + 64, set.manifest().entries.size());
  store_le<std::uint64_t>(h.data() + 72, payload_size(set));
  store_le<std::uint64_t>(h.data() + kDbChecksumOffset, checksum);
  sink.write(h.data(), h.size());
  for (std::uint32_t t = 0; t < g.cluster_size; ++t) put(sink, set.table(t).occupied_count());

  std::vector<std::uint64_t> sig_buf;
  std::vector<std::uint32_t> ref_buf;
  for (std::uint32_t t = 0; t < g.cluster_size; ++t) {
    const auto& table = set.table(t);
    put_array(sink, table.raw_bitmap());
    sig_buf.assign(table.raw_signatures().begin(), table.raw_signatures().end());
    ref_buf.assign(table.raw_refs().begin(), table.raw_refs().end());
    for (std::uint64_t s = 0; s < table.capacity(); ++s) {
      if (!table.occupied(s)) {
        sig_buf[s] = 0;
        ref_buf[s] = 0;
      }
    }
    put_array<Sink, std::uint64_t>(sink, sig_buf);
    put_array<Sink, std::uint32_t>(sink, ref_buf);
  }
  for (const auto& e : set.entries()) {
    put(sink, e.master_file_id);
    put(sink, e.tau);
    put(sink, e.byte_offset);
  }
  for (const auto& m : set.manifest().entries) {
    put(sink, m.master_file_id);
    put(sink, static_cast<std::uint32_t>(m.path.size()));
    put(sink, m.size_bytes);
    put(sink, m.sectors_ingested);
    put(sink, m.sectors_skipped);
    sink.write(m.path.data(), m.path.size());
  }
}

class CheckedReader {
 public:
  explicit CheckedReader(std::istream& is) : is_(is) {}

  void read(void* out, std::size_t n, const char* what) {
    is_.read(static_cast<char*>(out), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) {
      throw DbFormatError(DbErrorKind::kTruncated, std::string("while reading ") + what);
    }
    crc_.write(out, n);
  }

  template <typename T>
  T get(const char* what) {
    std::uint8_t buf[sizeof(T)];
    read(buf, sizeof(T), what);
    return load_le<T>(buf);
  }

  template <typename T>
  void get_array(std::span<T> out, const char* what) {
    read(out.data(), out.size_bytes(), what);
    if constexpr (std::endian::native != std::endian::little) {
      for (auto& v : out) v = load_le<T>(reinterpret_cast<const std::uint8_t*>(&v));
    }
  }

  Crc64Sink& crc() { return crc_; }
  bool at_eof() { return is_.peek() == std::char_traits<char>::eof(); }

 private:
  std::istream& is_;
  Crc64Sink crc_;
};

inline std::uint64_t popcount_bitmap(std::span<const std::uint64_t> words) {
  std::uint64_t n = 0;
  for (auto w : words) n += static_cast<std::uint64_t>(std::popcount(w));
  return n;
}

}  // namespace detail

inline void write_database(const SignatureTableSet& set, std::ostream& os) {
  detail::Crc64Sink crc;
  detail::serialize(set, 0, crc);
  detail::StreamSink sink(os);
  detail::serialize(set, crc.value(), sink);
  if (!os) throw DbFormatError(DbErrorKind::kIo, "write failed");
}

inline void save_database(const SignatureTableSet& set, const std::filesystem::path& path) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw DbFormatError(DbErrorKind::kIo, "cannot open " + tmp.string());
    try {
      write_database(set, os);
      os.close();
      if (!os) throw DbFormatError(DbErrorKind::kIo, "write failed: " + tmp.string());
    } catch (...) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw;
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw DbFormatError(DbErrorKind::kIo, "cannot rename into " + path.string());
  }
}

inline SignatureTableSet read_database(std::istream& is) {
  using detail::load_le;
  detail::CheckedReader in(is);

  std::array<std::uint8_t, kDbFixedHeaderSize> h{};
  is.read(reinterpret_cast<char*>(h.data()), kDbMagic.size());
  if (static_cast<std::size_t>(is.gcount()) != kDbMagic.size()) {
    throw DbFormatError(DbErrorKind::kTruncated, "file shorter than magic");
  }
  if (!std::equal(kDbMagic.begin(), kDbMagic.end(), reinterpret_cast<const char*>(h.data()))) {
    throw DbFormatError(DbErrorKind::kBadMagic, "not a signature database");
  }
  in.crc().write(h.data(), kDbMagic.size());
  in.read(h.data() + 8, kDbFixedHeaderSize - 8, "header");

  const auto version = load_le<std::uint32_t>(h.data() + 8);
  if (version != kDbFormatVersion) {
    throw DbFormatError(DbErrorKind::kUnsupportedVersion,
                        "format version " + std::to_string(version));
  }
  const auto algorithm_id = load_le<std::uint32_t>(h.data() + 12);
  const auto index_width = load_le<std::uint32_t>(h.data() + 16);
  const auto sector_size = load_le<std::uint32_t>(h.data() + 20);
  const auto cluster_size = load_le<std::uint32_t>(h.data() + 24);
  const auto header_size = load_le<std::uint32_t>(h.data() + 28);
  const params::Descriptor desc{load_le<std::uint64_t>(h.data() + 32),
                                load_le<std::uint64_t>(h.data() + 40),
                                load_le<std::uint64_t>(h.data() + 48)};
  const auto entry_count = load_le<std::uint64_t>(h.data() + 56);
  const auto manifest_count = load_le<std::uint64_t>(h.data() + 64);
  const auto declared_payload = load_le<std::uint64_t>(h.data() + 72);
  const auto stored_checksum = load_le<std::uint64_t>(h.data() + kDbChecksumOffset);

  if (!is_valid_algorithm(algorithm_id) ||
      params::describe(static_cast<HashAlgorithm>(algorithm_id)) != desc) {
    throw DbFormatError(DbErrorKind::kCorrupt, "unknown hash algorithm parameters");
  }
  if (index_width < kMinIndexWidth || index_width > kMaxIndexWidth || sector_size == 0 ||
      cluster_size == 0 || cluster_size > kMaxClusterSize ||
      header_size != kDbFixedHeaderSize + 8 * cluster_size || entry_count >= UINT32_MAX) {
    throw DbFormatError(DbErrorKind::kCorrupt, "invalid geometry in header");
  }

  // Checksum covers the header with its own field zeroed.
  std::array<std::uint8_t, 8> zero{};
  {
    detail::Crc64Sink header_crc;
    header_crc.write(h.data(), kDbChecksumOffset);
    header_crc.write(zero.data(), zero.size());
    in.crc() = header_crc;
  }

  const Geometry geometry{static_cast<HashAlgorithm>(algorithm_id), index_width, sector_size,
                          cluster_size};
  SignatureTableSet set(geometry);
  if (detail::payload_size(set) > declared_payload) {
    throw DbFormatError(DbErrorKind::kCorrupt, "declared payload smaller than geometry");
  }

  std::vector<std::uint64_t> occupied(cluster_size);
  for (auto& n : occupied) n = in.get<std::uint64_t>("occupied counts");
  for (std::uint32_t t = 0; t < cluster_size; ++t) {
    auto& table = set.table(t);
    in.get_array(table.raw_bitmap(), "occupancy bitmap");
    in.get_array(table.raw_signatures(), "signature slots");
    in.get_array(table.raw_refs(), "reference slots");
    table.set_occupied_count(occupied[t]);
  }
  // Counts come from an unverified header; grow as bytes actually arrive.
  set.entries().reserve(std::min<std::uint64_t>(entry_count, 1u << 20));
  for (std::uint64_t i = 0; i < entry_count; ++i) {
    MasterIndexEntry e;
    e.master_file_id = in.get<std::uint32_t>("master entries");
    e.tau = in.get<std::uint32_t>("master entries");
    e.byte_offset = in.get<std::uint64_t>("master entries");
    set.entries().push_back(e);
  }
  auto& manifest = set.manifest().entries;
  for (std::uint64_t i = 0; i < manifest_count; ++i) {
    ManifestEntry m;
    m.master_file_id = in.get<std::uint32_t>("manifest");
    const auto path_len = in.get<std::uint32_t>("manifest");
    m.size_bytes = in.get<std::uint64_t>("manifest");
    m.sectors_ingested = in.get<std::uint64_t>("manifest");
    m.sectors_skipped = in.get<std::uint64_t>("manifest");
    if (path_len > (1u << 20)) throw DbFormatError(DbErrorKind::kCorrupt, "manifest path length");
    m.path.resize(path_len);
    in.read(m.path.data(), path_len, "manifest path");
    manifest.push_back(std::move(m));
  }
  if (in.crc().value() != stored_checksum) {
    throw DbFormatError(DbErrorKind::kChecksumMismatch, "stored checksum does not match content");
  }
  if (!in.at_eof()) throw DbFormatError(DbErrorKind::kCorrupt, "trailing bytes after payload");
  if (detail::payload_size(set) != declared_payload) {
    throw DbFormatError(DbErrorKind::kCorrupt, "payload size disagrees with header");
  }

  // Structural checks: the checksum only proves the bytes are what the
  // writer produced.
  for (std::uint32_t t = 0; t < cluster_size; ++t) {
    const auto& table = set.table(t);
    if (detail::popcount_bitmap(table.raw_bitmap()) != table.occupied_count()) {
      throw DbFormatError(DbErrorKind::kCorrupt, "occupied count disagrees with bitmap");
    }
    for (std::uint64_t s = 0; s < table.capacity(); ++s) {
      if (table.occupied(s) && table.ref_at(s) >= entry_count) {
        throw DbFormatError(DbErrorKind::kCorrupt, "slot references missing master entry");
      }
    }
  }
  for (const auto& e : set.entries()) {
    if (e.master_file_id >= manifest_count || e.byte_offset % sector_size != 0 ||
        e.tau != set.tau_of_offset(e.byte_offset)) {
      throw DbFormatError(DbErrorKind::kCorrupt, "inconsistent master entry");
    }
  }
  if (!set.manifest().dense()) throw DbFormatError(DbErrorKind::kCorrupt, "manifest ids not dense");
  return set;
}

inline SignatureTableSet load_database(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DbFormatError(DbErrorKind::kIo, "cannot open " + path.string());
  return read_database(is);
}

}  // namespace sectorhash
