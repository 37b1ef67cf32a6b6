#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sectorhash {

/// One master file. Ids are dense from 0 and equal the entry's position.
struct ManifestEntry {
  std::uint32_t master_file_id = 0;
  std::string path;  // relative to the database's directory unless absolute
  std::uint64_t size_bytes = 0;
  std::uint64_t sectors_ingested = 0;
  std::uint64_t sectors_skipped = 0;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct CorpusManifest {
  std::vector<ManifestEntry> entries;

  std::uint32_t add(std::string path, std::uint64_t size_bytes) {
    const auto id = static_cast<std::uint32_t>(entries.size());
    entries.push_back(ManifestEntry{id, std::move(path), size_bytes, 0, 0});
    return id;
  }

  bool dense() const {
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (entries[i].master_file_id != i) return false;
    }
    return true;
  }

  friend bool operator==(const CorpusManifest&, const CorpusManifest&) = default;
};

}  // namespace sectorhash
