// Byte-stream hash primitives used to produce fixed-width sector signatures.
//
// Four algorithms are supported:
//   djb2   acc_0 = 5381, acc_i = acc_{i-1} * 33 + s_i      (mod 2^64)
//   sdbm   acc_0 = 0,    acc_i = acc_{i-1} * 65599 + s_i   (mod 2^64)
//   crc32  poly 0x04C11DB7, reflected in/out, init ~0, xorout ~0
//   crc64  poly 0x000000000000001B (x^64+x^4+x^3+x+1), reflected in/out,
//          init 0, xorout 0
//
// The CRC routines are table driven (slicing-by-8). All functions are pure;
// HashState is a plain value and may be used from any thread.

#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace sectorhash {

enum class HashAlgorithm : std::uint32_t {
  kDjb2 = 0,
  kSdbm = 1,
  kCrc32 = 2,
  kCrc64 = 3,
};

inline constexpr std::string_view to_string(HashAlgorithm algorithm) {
  switch (algorithm) {
    case HashAlgorithm::kDjb2: return "djb2";
    case HashAlgorithm::kSdbm: return "sdbm";
    case HashAlgorithm::kCrc32: return "crc32";
    case HashAlgorithm::kCrc64: return "crc64";
  }
  return "unknown";
}

inline std::optional<HashAlgorithm> parse_algorithm(std::string_view name) {
  for (auto a : {HashAlgorithm::kDjb2, HashAlgorithm::kSdbm,
                 HashAlgorithm::kCrc32, HashAlgorithm::kCrc64}) {
    if (to_string(a) == name) return a;
  }
  return std::nullopt;
}

inline constexpr bool is_valid_algorithm(std::uint32_t id) { return id <= 3; }

/// Fixed-width signature of one sector. Signature 0 is a legal value.
struct SectorSignature {
  std::uint64_t value = 0;

  friend constexpr auto operator<=>(SectorSignature, SectorSignature) = default;
};

struct HashState {
  std::uint64_t accumulator = 0;
  HashAlgorithm algorithm = HashAlgorithm::kDjb2;
  std::uint64_t bytes_consumed = 0;

  friend constexpr bool operator==(const HashState&, const HashState&) = default;
};

namespace params {

inline constexpr std::uint64_t kDjb2Seed = 5381;
inline constexpr std::uint64_t kDjb2Multiplier = 33;
inline constexpr std::uint64_t kSdbmSeed = 0;
inline constexpr std::uint64_t kSdbmMultiplier = 65599;

inline constexpr std::uint32_t kCrc32Poly = 0x04C11DB7u;
inline constexpr std::uint32_t kCrc32PolyReflected = 0xEDB88320u;
inline constexpr std::uint32_t kCrc32Init = 0xFFFFFFFFu;
inline constexpr std::uint32_t kCrc32XorOut = 0xFFFFFFFFu;

inline constexpr std::uint64_t kCrc64Poly = 0x000000000000001Bull;
inline constexpr std::uint64_t kCrc64PolyReflected = 0xD800000000000000ull;
inline constexpr std::uint64_t kCrc64Init = 0;
inline constexpr std::uint64_t kCrc64XorOut = 0;

/// The three numbers that pin down an algorithm: multiplier (or reflected
/// polynomial), initial register, final xor. Stored in database headers.
struct Descriptor {
  std::uint64_t multiplier_or_poly;
  std::uint64_t init;
  std::uint64_t xor_out;

  friend constexpr bool operator==(const Descriptor&, const Descriptor&) = default;
};

inline constexpr Descriptor describe(HashAlgorithm algorithm) {
  switch (algorithm) {
    case HashAlgorithm::kDjb2: return {kDjb2Multiplier, kDjb2Seed, 0};
    case HashAlgorithm::kSdbm: return {kSdbmMultiplier, kSdbmSeed, 0};
    case HashAlgorithm::kCrc32: return {kCrc32PolyReflected, kCrc32Init, kCrc32XorOut};
    case HashAlgorithm::kCrc64: return {kCrc64PolyReflected, kCrc64Init, kCrc64XorOut};
  }
  return {0, 0, 0};
}

}  // namespace params

namespace detail {

template <typename Word, Word kReflectedPoly>
struct SlicingTables {
  std::array<std::array<Word, 256>, 8> t{};

  constexpr SlicingTables() {
    for (unsigned i = 0; i < 256; ++i) {
      Word crc = static_cast<Word>(i);
      for (int bit = 0; bit < 8; ++bit) {
        crc = (crc & 1) ? static_cast<Word>((crc >> 1) ^ kReflectedPoly)
                        : static_cast<Word>(crc >> 1);
      }
      t[0][i] = crc;
    }
    for (unsigned i = 0; i < 256; ++i) {
      for (unsigned k = 1; k < 8; ++k) {
        t[k][i] = static_cast<Word>((t[k - 1][i] >> 8) ^ t[0][t[k - 1][i] & 0xFF]);
      }
    }
  }
};

inline constexpr SlicingTables<std::uint32_t, params::kCrc32PolyReflected> kCrc32Tables{};
inline constexpr SlicingTables<std::uint64_t, params::kCrc64PolyReflected> kCrc64Tables{};

inline std::uint64_t load_le64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

inline std::uint32_t crc32_update(std::uint32_t crc, const std::uint8_t* p, std::size_t n) {
  const auto& t = kCrc32Tables.t;
  while (n >= 8) {
    const std::uint64_t word = load_le64(p) ^ crc;
    crc = t[7][word & 0xFF] ^ t[6][(word >> 8) & 0xFF] ^ t[5][(word >> 16) & 0xFF] ^
          t[4][(word >> 24) & 0xFF] ^ t[3][(word >> 32) & 0xFF] ^
          t[2][(word >> 40) & 0xFF] ^ t[1][(word >> 48) & 0xFF] ^ t[0][word >> 56];
    p += 8;
    n -= 8;
  }
  while (n--) crc = (crc >> 8) ^ t[0][(crc ^ *p++) & 0xFF];
  return crc;
}

inline std::uint64_t crc64_update(std::uint64_t crc, const std::uint8_t* p, std::size_t n) {
  const auto& t = kCrc64Tables.t;
  while (n >= 8) {
    const std::uint64_t word = load_le64(p) ^ crc;
    crc = t[7][word & 0xFF] ^ t[6][(word >> 8) & 0xFF] ^ t[5][(word >> 16) & 0xFF] ^
          t[4][(word >> 24) & 0xFF] ^ t[3][(word >> 32) & 0xFF] ^
          t[2][(word >> 40) & 0xFF] ^ t[1][(word >> 48) & 0xFF] ^ t[0][word >> 56];
    p += 8;
    n -= 8;
  }
  while (n--) crc = (crc >> 8) ^ t[0][(crc ^ *p++) & 0xFF];
  return crc;
}

template <std::uint64_t kMultiplier>
inline std::uint64_t multiplicative_update(std::uint64_t acc, const std::uint8_t* p,
                                           std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) acc = acc * kMultiplier + p[i];
  return acc;
}

}  // namespace detail

inline constexpr HashState hash_init(HashAlgorithm algorithm) {
  return HashState{params::describe(algorithm).init, algorithm, 0};
}

inline HashState hash_update(HashState state, std::span<const std::uint8_t> bytes) {
  const auto* p = bytes.data();
  const auto n = bytes.size();
  switch (state.algorithm) {
    case HashAlgorithm::kDjb2:
      state.accumulator =
          detail::multiplicative_update<params::kDjb2Multiplier>(state.accumulator, p, n);
      break;
    case HashAlgorithm::kSdbm:
      state.accumulator =
          detail::multiplicative_update<params::kSdbmMultiplier>(state.accumulator, p, n);
      break;
    case HashAlgorithm::kCrc32:
      state.accumulator = detail::crc32_update(
          static_cast<std::uint32_t>(state.accumulator), p, n);
      break;
    case HashAlgorithm::kCrc64:
      state.accumulator = detail::crc64_update(state.accumulator, p, n);
      break;
  }
  state.bytes_consumed += n;
  return state;
}

inline constexpr SectorSignature hash_finalize(const HashState& state) {
  return SectorSignature{state.accumulator ^ params::describe(state.algorithm).xor_out};
}

inline SectorSignature hash_bytes(std::span<const std::uint8_t> bytes,
                                  HashAlgorithm algorithm) {
  return hash_finalize(hash_update(hash_init(algorithm), bytes));
}

inline constexpr std::size_t kDefaultSectorSize = 512;

class SectorLengthError : public std::invalid_argument {
 public:
  SectorLengthError(std::size_t got, std::size_t expected)
      : std::invalid_argument("sector length " + std::to_string(got) +
                              " does not match sector size " + std::to_string(expected)) {}
};

/// Signature of exactly one sector. Throws SectorLengthError on a short or
/// long block.
inline SectorSignature sector_signature(std::span<const std::uint8_t> sector,
                                        HashAlgorithm algorithm,
                                        std::size_t sector_size = kDefaultSectorSize) {
  if (sector.size() != sector_size) throw SectorLengthError(sector.size(), sector_size);
  return hash_bytes(sector, algorithm);
}

}  // namespace sectorhash
