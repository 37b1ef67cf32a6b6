// Text and machine-readable output formats. Byte layouts are documented in
// docs/FORMATS.md; keep the two in sync.

#pragma once

#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sectorhash/experiments.hpp"
#include "sectorhash/ingest.hpp"
#include "sectorhash/scanner.hpp"
#include "sectorhash/sigdb.hpp"

namespace sectorhash {

inline std::string signature_hex(SectorSignature s) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(s.value));
  return buf;
}

/// Backslash-escapes tab, newline, carriage return and backslash.
inline std::string escape_field(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out += c;
    }
  }
  return out;
}

inline constexpr std::string_view kMatchReportHeader = "# sectorhash match report v1";
inline constexpr std::string_view kMatchReportFields =
    "# fields: image_offset sector_index tau signature_hex master_path master_offset status";

inline void write_match_record(std::ostream& os, const MatchRecord& r,
                               const std::string& master_path) {
  os << r.image_offset << '\t' << r.sector_index << '\t' << r.tau << '\t'
     << signature_hex(r.signature) << '\t' << escape_field(master_path) << '\t'
     << r.master_byte_offset << '\t' << to_string(r.status) << '\n';
}

/// `matches` must be sorted (scan results are). Every image gets its
/// "# image" line even when it has no records.
inline void write_match_report(std::ostream& os, const std::vector<MatchRecord>& matches,
                               const std::vector<std::string>& image_names,
                               const CorpusManifest& manifest) {
  os << kMatchReportHeader << '\n' << kMatchReportFields << '\n';
  auto it = matches.begin();
  for (std::uint32_t i = 0; i < image_names.size(); ++i) {
    os << "# image " << i << ' ' << escape_field(image_names[i]) << '\n';
    for (; it != matches.end() && it->image_index == i; ++it) {
      const auto& path = it->master_file_id < manifest.entries.size()
                             ? manifest.entries[it->master_file_id].path
                             : std::string("?");
      write_match_record(os, *it, path);
    }
  }
}

inline void write_scan_summary(std::ostream& os, const ScanStats& s) {
  char rate[64];
  std::snprintf(rate, sizeof rate, "%.1f", s.bytes_per_second() / 1e6);
  char secs[64];
  std::snprintf(secs, sizeof secs, "%.3f", s.elapsed_seconds);
  os << "image bytes:      " << s.image_bytes << '\n'
     << "bytes scanned:    " << s.bytes_scanned << '\n'
     << "sectors hashed:   " << s.sectors_hashed << '\n'
     << "tail bytes:       " << s.tail_bytes << '\n'
     << "candidates:       " << s.candidates << '\n'
     << "verified:         " << s.verified << '\n'
     << "false positives:  " << s.false_positives << '\n'
     << "unverifiable:     " << s.unverifiable << '\n'
     << "elapsed (s):      " << secs << '\n'
     << "throughput (MB/s): " << rate << '\n';
}

inline void write_build_summary(std::ostream& os, const SignatureTableSet& set,
                                const IngestReport& report) {
  std::uint64_t zero = 0, ff = 0;
  for (const auto& f : report.files) {
    zero += f.skipped_zero;
    ff += f.skipped_ff;
  }
  os << "files:            " << report.files.size() << " (" << report.failed_files
     << " failed)\n"
     << "sectors ingested: " << report.sectors_ingested << " (" << report.duplicates
     << " duplicates)\n"
     << "sectors skipped:  " << report.sectors_skipped << " (all-zero " << zero << ", all-0xff "
     << ff << ")\n";
  for (std::uint32_t t = 0; t < set.table_count(); ++t) {
    const auto& table = set.table(t);
    char occ[32];
    std::snprintf(occ, sizeof occ, "%.6f", table.occupancy());
    os << "S_" << t << ": " << table.occupied_count() << " / " << table.capacity()
       << " occupied (" << occ << ")\n";
  }
  for (const auto& f : report.files) {
    if (f.failed) os << "failed: " << f.path << ": " << f.error << '\n';
  }
}

inline void write_build_records(std::ostream& os, const SignatureTableSet& set,
                                const IngestReport& report) {
  using nlohmann::json;
  for (const auto& f : report.files) {
    json j = {{"type", "file"},
              {"master_file_id", f.master_file_id},
              {"path", set.manifest().entries.at(f.master_file_id).path},
              {"size_bytes", f.size_bytes},
              {"sectors_ingested", f.sectors_ingested},
              {"sectors_skipped", f.sectors_skipped},
              {"skipped_zero", f.skipped_zero},
              {"skipped_ff", f.skipped_ff},
              {"duplicates", f.duplicates},
              {"trailing_bytes", f.trailing_bytes},
              {"failed", f.failed}};
    if (f.failed) j["error"] = f.error;
    os << j.dump() << '\n';
  }
  for (std::uint32_t t = 0; t < set.table_count(); ++t) {
    const auto& table = set.table(t);
    os << json{{"type", "table"},
               {"tau", t},
               {"occupied", table.occupied_count()},
               {"capacity", table.capacity()},
               {"occupancy", table.occupancy()}}
              .dump()
       << '\n';
  }
  os << json{{"type", "build"},
             {"algorithm", to_string(set.algorithm())},
             {"index_width", set.geometry().index_width},
             {"sector_size", set.geometry().sector_size},
             {"cluster_size", set.geometry().cluster_size},
             {"files", report.files.size()},
             {"failed_files", report.failed_files},
             {"sectors_ingested", report.sectors_ingested},
             {"sectors_skipped", report.sectors_skipped},
             {"duplicates", report.duplicates},
             {"occupancy", set.occupancy().aggregate}}
            .dump()
     << '\n';
}

inline nlohmann::json collision_record(const CollisionReport& r, HashAlgorithm algorithm,
                                       std::uint64_t seed) {
  return {{"type", "collision"},
          {"algorithm", to_string(algorithm)},
          {"seed", seed},
          {"sectors_tested", r.sectors_tested},
          {"distinct_signatures", r.distinct_signatures},
          {"colliding_sectors", r.colliding_sectors},
          {"collision_rate", r.collision_rate}};
}

inline nlohmann::json throughput_record(const ThroughputPoint& p, HashAlgorithm algorithm) {
  return {{"type", "throughput"},
          {"algorithm", to_string(algorithm)},
          {"target_occupancy", p.target_occupancy},
          {"occupancy", p.occupancy},
          {"mean_probe_distance", p.mean_probe_distance},
          {"lookups", p.lookups},
          {"mb_per_second", p.bytes_per_second / 1e6}};
}

inline constexpr std::string_view kThroughputCsvHeader =
    "occupancy,mb_per_second,mean_probe_distance";

inline void write_throughput_csv(std::ostream& os, const std::vector<ThroughputPoint>& points) {
  os << kThroughputCsvHeader << '\n';
  for (const auto& p : points) {
    char line[128];
    std::snprintf(line, sizeof line, "%.6f,%.3f,%.6f\n", p.occupancy, p.bytes_per_second / 1e6,
                  p.mean_probe_distance);
    os << line;
  }
}

}  // namespace sectorhash
