#include "sectorhash/db_file.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>
#include <string>

#include "support.hpp"

namespace sectorhash {
namespace {

std::string serialize(const SignatureTableSet& set) {
  std::ostringstream os(std::ios::binary);
  write_database(set, os);
  return os.str();
}

SignatureTableSet deserialize(const std::string& bytes) {
  std::istringstream is(bytes, std::ios::binary);
  return read_database(is);
}

DbErrorKind error_kind(const std::string& bytes) {
  try {
    deserialize(bytes);
  } catch (const DbFormatError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "load unexpectedly succeeded";
  return DbErrorKind::kIo;
}

SignatureTableSet populated(std::uint64_t seed, unsigned w = 10, int n = 1000) {
  SignatureTableSet set(Geometry{HashAlgorithm::kCrc64, w, 512, 8});
  set.manifest().add("a/master0.jpg", 1 << 20);
  set.manifest().add("b/master\t1.bin", 2 << 20);
  std::mt19937_64 rng(seed);
  for (int i = 0; i < n; ++i) {
    const auto file = static_cast<std::uint32_t>(rng() % 2);
    const std::uint64_t offset = (rng() % 4096) * 512;
    const auto tau = set.tau_of_offset(offset);
    set.insert_signature(tau, SectorSignature{rng()}, MasterIndexEntry{file, tau, offset});
  }
  return set;
}

TEST(DbFile, EmptySetRoundTrips) {
  SignatureTableSet set(Geometry{HashAlgorithm::kDjb2, 4, 512, 8});
  const auto loaded = deserialize(serialize(set));
  EXPECT_EQ(loaded, set);
  for (std::uint32_t t = 0; t < 8; ++t) EXPECT_EQ(loaded.table(t).occupied_count(), 0u);
}

TEST(DbFile, PopulatedSetRoundTripsBitExactly) {
  const auto set = populated(5);
  const auto bytes = serialize(set);
  const auto loaded = deserialize(bytes);
  EXPECT_EQ(loaded, set);
  EXPECT_EQ(serialize(loaded), bytes);

  std::mt19937_64 rng(5);
  for (int i = 0; i < 1000; ++i) {
    (void)(rng() % 2);
    const std::uint64_t offset = (rng() % 4096) * 512;
    const SectorSignature h{rng()};
    const auto tau = set.tau_of_offset(offset);
    const auto a = set.lookup(tau, h);
    const auto b = loaded.lookup(tau, h);
    ASSERT_TRUE(a.found);
    EXPECT_EQ(a.found, b.found);
    EXPECT_EQ(set.entry(a.ref), loaded.entry(b.ref));
  }
  EXPECT_EQ(loaded.manifest().entries[1].path, "b/master\t1.bin");
}

TEST(DbFile, HeaderDescribesGeometry) {
  SignatureTableSet set(Geometry{HashAlgorithm::kSdbm, 5, 4096, 4});
  const auto bytes = serialize(set);
  ASSERT_GE(bytes.size(), kDbFixedHeaderSize);
  EXPECT_EQ(bytes.substr(0, 8), std::string("SHSIGDB\0", 8));
  const auto loaded = deserialize(bytes);
  EXPECT_EQ(loaded.geometry(), set.geometry());
}

TEST(DbFile, BadMagic) {
  auto bytes = serialize(populated(1));
  bytes[0] = 'X';
  EXPECT_EQ(error_kind(bytes), DbErrorKind::kBadMagic);
}

TEST(DbFile, UnsupportedVersion) {
  auto bytes = serialize(populated(1));
  bytes[8] = 2;
  EXPECT_EQ(error_kind(bytes), DbErrorKind::kUnsupportedVersion);
}

TEST(DbFile, Truncation) {
  const auto bytes = serialize(populated(1));
  for (std::size_t keep : {std::size_t{3}, std::size_t{20}, kDbFixedHeaderSize + 4,
                           bytes.size() / 2, bytes.size() - 1}) {
    EXPECT_EQ(error_kind(bytes.substr(0, keep)), DbErrorKind::kTruncated) << keep;
  }
}

TEST(DbFile, ChecksumMismatch) {
  const auto good = serialize(populated(1));
  std::mt19937_64 rng(8);
  for (int i = 0; i < 20; ++i) {
    auto bytes = good;
    // Stay clear of the manifest, whose length fields would read as truncation.
    const auto pos = kDbFixedHeaderSize + 64 + rng() % (bytes.size() - kDbFixedHeaderSize - 300);
    bytes[pos] = static_cast<char>(bytes[pos] ^ 0x10);
    EXPECT_EQ(error_kind(bytes), DbErrorKind::kChecksumMismatch) << pos;
  }
  auto bytes = good;
  bytes[kDbChecksumOffset] ^= 1;
  EXPECT_EQ(error_kind(bytes), DbErrorKind::kChecksumMismatch);
}

TEST(DbFile, TrailingBytesAreCorrupt) {
  EXPECT_EQ(error_kind(serialize(populated(1)) + "x"), DbErrorKind::kCorrupt);
}

TEST(DbFile, SaveAndLoadThroughFiles) {
  testing::TempDir dir;
  const auto set = populated(9, 8, 300);
  save_database(set, dir / "db.shdb");
  EXPECT_FALSE(std::filesystem::exists(dir / "db.shdb.tmp"));
  EXPECT_EQ(load_database(dir / "db.shdb"), set);
  try {
    load_database(dir / "missing.shdb");
    FAIL();
  } catch (const DbFormatError& e) {
    EXPECT_EQ(e.kind(), DbErrorKind::kIo);
  }
}

}  // namespace
}  // namespace sectorhash
