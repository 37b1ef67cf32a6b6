// Command-line driver: build, scan, collide, bench.
//
// Exit codes: 0 success, 1 fatal error, 2 usage error, 3 --fail-on-match
// triggered. Machine-readable output goes to the named file or stdout;
// progress goes to stderr.

#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sectorhash/db_file.hpp"
#include "sectorhash/experiments.hpp"
#include "sectorhash/image.hpp"
#include "sectorhash/ingest.hpp"
#include "sectorhash/report.hpp"
#include "sectorhash/scanner.hpp"
#include "sectorhash/sigdb.hpp"

namespace sectorhash::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFatal = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitMatchFound = 3;

namespace detail {

namespace fs = std::filesystem;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline HashAlgorithm algorithm_from(const std::string& name) {
  if (auto a = parse_algorithm(name)) return *a;
  throw UsageError("unknown algorithm '" + name + "' (expected djb2, sdbm, crc32 or crc64)");
}

/// Path of `file` as recorded in a database stored in `db_dir`.
inline std::string manifest_path(const fs::path& file, const fs::path& db_dir) {
  const auto abs = fs::absolute(file).lexically_normal();
  const auto rel = abs.lexically_relative(fs::absolute(db_dir).lexically_normal());
  return rel.empty() ? abs.generic_string() : rel.generic_string();
}

/// Writes to `path`, or to `fallback` when path is "-".
class Output {
 public:
  Output(const std::string& path, std::ostream& fallback) {
    if (path == "-") {
      os_ = &fallback;
    } else {
      file_ = std::make_unique<std::ofstream>(path, std::ios::binary | std::ios::trunc);
      if (!*file_) throw std::runtime_error("cannot open " + path + " for writing");
      os_ = file_.get();
    }
  }
  std::ostream& stream() { return *os_; }
  bool is_fallback() const { return !file_; }

 private:
  std::unique_ptr<std::ofstream> file_;
  std::ostream* os_ = nullptr;
};

struct BuildArgs {
  std::vector<std::string> corpus;
  std::string output;
  std::string algorithm = "djb2";
  unsigned index_width = kDefaultIndexWidth;
  std::uint32_t sector_size = kDefaultSectorSize;
  std::uint32_t cluster_size = kDefaultClusterSize;
  bool no_skip_zero = false;
  bool no_skip_ff = false;
  unsigned threads = 0;
  std::string stats;
};

struct ScanArgs {
  std::string db;
  std::vector<std::string> images;
  std::string report = "-";
  bool no_verify = false;
  std::uint64_t partition_offset = 0;
  bool lookup_all_tables = false;
  bool fail_on_match = false;
  std::string corpus_root;
  std::uint32_t sector_size = 0;
  std::uint32_t cluster_size = 0;
  std::uint32_t batch_size = kDefaultBatchSize;
  std::uint64_t buffer_size = kDefaultBufferSize;
  std::uint32_t buffers = 2;
  unsigned threads = 0;
  bool quiet = false;
};

struct CollideArgs {
  std::uint64_t n = 0;
  std::string algorithm = "djb2";
  std::uint64_t seed = 1;
  std::string output = "-";
};

struct BenchArgs {
  std::vector<double> occupancies;
  std::uint64_t image_size = 64u << 20;
  std::uint64_t seed = 1;
  std::string algorithm = "djb2";
  unsigned index_width = 20;
  unsigned runs = 1;
  std::string csv = "-";
  std::string records;
};

inline int cmd_build(const BuildArgs& a, std::ostream& out, std::ostream& err) {
  const auto algorithm = algorithm_from(a.algorithm);
  std::vector<fs::path> inputs(a.corpus.begin(), a.corpus.end());
  for (const auto& in : inputs) {
    if (!fs::exists(in)) {
      err << "error: corpus path does not exist: " << in.string() << '\n';
      return kExitFatal;
    }
  }
  const auto files = expand_corpus(inputs);
  if (files.empty()) {
    err << "error: corpus is empty, nothing to build\n";
    return kExitFatal;
  }
  SignatureTableSet set(Geometry{algorithm, a.index_width, a.sector_size, a.cluster_size});
  const fs::path db_path = a.output;
  const auto db_dir = db_path.has_parent_path() ? db_path.parent_path() : fs::path(".");
  std::vector<std::string> recorded;
  recorded.reserve(files.size());
  for (const auto& f : files) recorded.push_back(manifest_path(f, db_dir));

  IngestOptions options;
  options.skip = SkipRules{!a.no_skip_zero, !a.no_skip_ff};
  options.threads = a.threads;
  IngestReport report;
  try {
    report = ingest_corpus(set, files, options, recorded);
  } catch (const TableFullError& e) {
    err << "error: " << e.what() << " (current --index-width " << a.index_width << ")\n";
    return kExitFatal;
  }
  save_database(set, db_path);
  if (!a.stats.empty()) {
    Output stats(a.stats, out);
    write_build_records(stats.stream(), set, report);
  }
  out << "wrote " << db_path.string() << " (" << to_string(algorithm) << ", w=" << a.index_width
      << ")\n";
  write_build_summary(out, set, report);
  return kExitOk;
}

inline int cmd_scan(const ScanArgs& a, std::ostream& out, std::ostream& err) {
  SignatureTableSet set = load_database(a.db);
  const auto& g = set.geometry();
  ScanConfig config;
  config.sector_size = a.sector_size ? a.sector_size : g.sector_size;
  config.cluster_size = a.cluster_size ? a.cluster_size : g.cluster_size;
  config.batch_size = a.batch_size;
  config.buffer_size = a.buffer_size;
  config.buffers_per_source = a.buffers;
  config.partition_offset = a.partition_offset;
  config.verify = !a.no_verify;
  config.lookup_all_tables = a.lookup_all_tables;
  config.hash_workers = a.threads;
  try {
    config.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  try {
    check_geometry(set, config);
  } catch (const GeometryMismatchError& e) {
    err << "error: refusing to scan: " << e.what() << '\n';
    return kExitFatal;
  }

  std::vector<std::unique_ptr<FileImageSource>> owned;
  std::vector<const ImageSource*> images;
  std::vector<std::string> names;
  for (const auto& p : a.images) {
    owned.push_back(std::make_unique<FileImageSource>(p));
    images.push_back(owned.back().get());
    names.push_back(p);
  }
  const fs::path db_path = a.db;
  const fs::path root = !a.corpus_root.empty()      ? fs::path(a.corpus_root)
                        : db_path.has_parent_path() ? db_path.parent_path()
                                                    : fs::path(".");
  const FileCorpus corpus(set.manifest(), root);

  ScanHooks hooks;
  auto last = std::chrono::steady_clock::now();
  if (!a.quiet) {
    hooks.on_progress = [&](std::uint64_t done, std::uint64_t total) {
      const auto now = std::chrono::steady_clock::now();
      if (now - last < std::chrono::seconds(1)) return;
      last = now;
      err << "progress: " << done << " / " << total << " bytes\n";
    };
  }
  const auto result = scan_images(set, images, corpus, config, hooks);

  Output report(a.report, out);
  write_match_report(report.stream(), result.matches, names, set.manifest());
  report.stream().flush();
  write_scan_summary(report.is_fallback() ? err : out, result.stats);

  const bool matched = config.verify ? result.stats.verified > 0 : result.stats.candidates > 0;
  return a.fail_on_match && matched ? kExitMatchFound : kExitOk;
}

inline int cmd_collide(const CollideArgs& a, std::ostream& out, std::ostream& err) {
  if (a.n < 1) throw UsageError("-n must be at least 1");
  const auto algorithm = algorithm_from(a.algorithm);
  const auto r = collision_experiment(a.n, algorithm, a.seed);
  Output o(a.output, out);
  o.stream() << collision_record(r, algorithm, a.seed).dump() << '\n';
  (o.is_fallback() ? err : out) << "sectors tested: " << r.sectors_tested
                                << ", distinct signatures: " << r.distinct_signatures
                                << ", colliding sectors: " << r.colliding_sectors
                                << ", rate: " << r.collision_rate << '\n';
  return kExitOk;
}

inline int cmd_bench(const BenchArgs& a, std::ostream& out, std::ostream& err) {
  if (a.occupancies.empty()) throw UsageError("--occupancy needs at least one value");
  for (double o : a.occupancies) {
    if (!(o > 0.0 && o < 1.0)) throw UsageError("occupancy values must lie in (0, 1)");
  }
  if (a.image_size < kDefaultSectorSize) throw UsageError("--image-size must cover one sector");
  if (a.runs < 1) throw UsageError("--runs must be at least 1");
  if (a.index_width < kMinIndexWidth || a.index_width > kMaxIndexWidth) {
    throw UsageError("--index-width out of range");
  }
  const auto algorithm = algorithm_from(a.algorithm);
  SweepOptions options;
  options.index_width = a.index_width;
  options.runs = a.runs;
  const auto points = occupancy_sweep(a.occupancies, a.image_size, algorithm, a.seed, options);
  Output csv(a.csv, out);
  write_throughput_csv(csv.stream(), points);
  if (!a.records.empty()) {
    Output rec(a.records, out);
    for (const auto& p : points) rec.stream() << throughput_record(p, algorithm).dump() << '\n';
  }
  auto& summary = csv.is_fallback() ? err : out;
  for (const auto& p : points) {
    summary << "occupancy " << p.occupancy << ": " << p.bytes_per_second / 1e6
            << " MB/s, mean probe distance " << p.mean_probe_distance << '\n';
  }
  return kExitOk;
}

}  // namespace detail

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  using namespace detail;
  CLI::App app{"Sector-signature data carving: build signature databases from master files "
               "and scan disk images for matching sectors."};
  app.name("sectorhash");
  app.require_subcommand(1);

  BuildArgs build;
  auto* b = app.add_subcommand("build", "Build a signature database from master files");
  b->add_option("corpus", build.corpus, "Master files or directories (searched recursively)")
      ->required();
  b->add_option("-o,--output", build.output, "Database file to write")->required();
  b->add_option("-a,--algorithm", build.algorithm, "Signature hash: djb2, sdbm, crc32, crc64")
      ->capture_default_str();
  b->add_option("-w,--index-width", build.index_width, "Table index bits (2^w slots per table)")
      ->capture_default_str()
      ->check(CLI::Range(kMinIndexWidth, kMaxIndexWidth));
  b->add_option("--sector-size", build.sector_size, "Sector size in bytes")
      ->capture_default_str()
      ->check(CLI::Range(1u, 1u << 20));
  b->add_option("--cluster-size", build.cluster_size, "Sectors per cluster (number of tables)")
      ->capture_default_str()
      ->check(CLI::Range(1u, kMaxClusterSize));
  b->add_flag("--no-skip-zero", build.no_skip_zero, "Keep all-zero master sectors");
  b->add_flag("--no-skip-ff", build.no_skip_ff, "Keep all-0xFF master sectors");
  b->add_option("--threads", build.threads, "Hashing threads (0 = all cores)")
      ->capture_default_str();
  b->add_option("--stats", build.stats, "Write JSON-lines build statistics to this file ('-' = stdout)");

  ScanArgs scan;
  auto* s = app.add_subcommand("scan", "Scan disk images against a signature database");
  s->add_option("images", scan.images, "Image files or block devices")->required();
  s->add_option("-d,--db", scan.db, "Signature database")->required();
  s->add_option("-r,--report", scan.report, "Match report destination ('-' = stdout)")
      ->capture_default_str();
  s->add_flag("--no-verify", scan.no_verify, "Report candidates without byte comparison");
  s->add_option("--partition-offset", scan.partition_offset,
                "Byte offset where the cluster grid starts")
      ->capture_default_str();
  s->add_flag("--lookup-all-tables", scan.lookup_all_tables,
              "Look every sector up in all tables, not only S_tau");
  s->add_flag("--fail-on-match", scan.fail_on_match, "Exit with status 3 when anything matches");
  s->add_option("--corpus-root", scan.corpus_root,
                "Directory that relative master paths resolve against (default: database directory)");
  s->add_option("--sector-size", scan.sector_size, "Expected sector size; must match the database");
  s->add_option("--cluster-size", scan.cluster_size,
                "Expected cluster size; must match the database");
  s->add_option("--batch-size", scan.batch_size, "Sectors hashed per batch")->capture_default_str();
  s->add_option("--buffer-size", scan.buffer_size, "Bytes per I/O buffer")->capture_default_str();
  s->add_option("--buffers", scan.buffers, "I/O buffers per image")->capture_default_str();
  s->add_option("--threads", scan.threads, "Hash/match workers (0 = all cores)")
      ->capture_default_str();
  s->add_flag("-q,--quiet", scan.quiet, "No progress output");

  CollideArgs collide;
  auto* c = app.add_subcommand("collide", "Count signature collisions over distinct random sectors");
  c->add_option("-n", collide.n, "Number of sectors")->required();
  c->add_option("-a,--algorithm", collide.algorithm, "Signature hash")->capture_default_str();
  c->add_option("--seed", collide.seed, "Random seed")->capture_default_str();
  c->add_option("-o,--output", collide.output, "JSON-lines result destination ('-' = stdout)")
      ->capture_default_str();

  BenchArgs bench;
  auto* be = app.add_subcommand("bench", "Measure scan throughput versus table occupancy");
  be->add_option("--occupancy", bench.occupancies, "Target occupancies in (0,1), comma separated")
      ->required()
      ->delimiter(',');
  be->add_option("--image-size", bench.image_size, "In-memory image size in bytes")
      ->capture_default_str();
  be->add_option("--seed", bench.seed, "Random seed")->capture_default_str();
  be->add_option("-a,--algorithm", bench.algorithm, "Signature hash")->capture_default_str();
  be->add_option("-w,--index-width", bench.index_width, "Table index bits")->capture_default_str();
  be->add_option("--runs", bench.runs, "Runs per point; throughput is the median")
      ->capture_default_str();
  be->add_option("--csv", bench.csv, "CSV destination ('-' = stdout)")->capture_default_str();
  be->add_option("--records", bench.records, "Also write JSON-lines records to this file");

  std::vector<const char*> argv;
  argv.push_back("sectorhash");
  for (const auto& arg : args) argv.push_back(arg.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    if (auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front()) {
      err << sub->help();
    }
    return kExitUsage;
  }

  try {
    if (b->parsed()) return cmd_build(build, out, err);
    if (s->parsed()) return cmd_scan(scan, out, err);
    if (c->parsed()) return cmd_collide(collide, out, err);
    if (be->parsed()) return cmd_bench(bench, out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFatal;
  }
  return kExitUsage;
}

inline int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args);
}

}  // namespace sectorhash::cli
