// Read-only byte sources: disk images to scan and master corpora to verify
// against. All reads are positional and safe to issue from several threads.

#pragma once

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sectorhash/manifest.hpp"

namespace sectorhash {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ImageSource {
 public:
  virtual ~ImageSource() = default;
  virtual std::uint64_t size() const = 0;
  /// Reads up to out.size() bytes at offset; returns the count read, which
  /// is short only at end of image. Throws IoError on failure.
  virtual std::size_t read_at(std::uint64_t offset, std::span<std::uint8_t> out) const = 0;
  virtual std::string name() const = 0;
};

namespace detail {

class FileDescriptor {
 public:
  FileDescriptor() = default;
  explicit FileDescriptor(int fd) : fd_(fd) {}
  FileDescriptor(const FileDescriptor&) = delete;
  FileDescriptor& operator=(const FileDescriptor&) = delete;
  FileDescriptor(FileDescriptor&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  FileDescriptor& operator=(FileDescriptor&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  ~FileDescriptor() { reset(); }

  int get() const { return fd_; }
  explicit operator bool() const { return fd_ >= 0; }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

inline FileDescriptor open_read_only(const std::filesystem::path& path) {
  return FileDescriptor(::open(path.c_str(), O_RDONLY | O_CLOEXEC));
}

/// pread until `out` is full or EOF.
inline std::size_t pread_full(int fd, std::uint64_t offset, std::span<std::uint8_t> out,
                              const std::string& name) {
  std::size_t done = 0;
  while (done < out.size()) {
    const auto n = ::pread(fd, out.data() + done, out.size() - done,
                           static_cast<off_t>(offset + done));
    if (n < 0) {
      if (errno == EINTR) continue;
      throw IoError("read failed on " + name + ": " + std::strerror(errno));
    }
    if (n == 0) break;
    done += static_cast<std::size_t>(n);
  }
  return done;
}

}  // namespace detail

/// A regular file or block device.
class FileImageSource final : public ImageSource {
 public:
  explicit FileImageSource(const std::filesystem::path& path)
      : path_(path), fd_(detail::open_read_only(path)) {
    if (!fd_) throw IoError("cannot open image " + path.string() + ": " + std::strerror(errno));
    struct stat st {};
    if (::fstat(fd_.get(), &st) != 0) throw IoError("cannot stat image " + path.string());
    if (S_ISREG(st.st_mode)) {
      size_ = static_cast<std::uint64_t>(st.st_size);
    } else {
      const auto end = ::lseek(fd_.get(), 0, SEEK_END);
      if (end < 0) throw IoError("cannot size image " + path.string());
      size_ = static_cast<std::uint64_t>(end);
    }
  }

  std::uint64_t size() const override { return size_; }
  std::size_t read_at(std::uint64_t offset, std::span<std::uint8_t> out) const override {
    return detail::pread_full(fd_.get(), offset, out, path_.string());
  }
  std::string name() const override { return path_.string(); }

 private:
  std::filesystem::path path_;
  detail::FileDescriptor fd_;
  std::uint64_t size_ = 0;
};

class MemoryImageSource final : public ImageSource {
 public:
  explicit MemoryImageSource(std::shared_ptr<const std::vector<std::uint8_t>> bytes,
                             std::string name = "<memory>")
      : bytes_(std::move(bytes)), name_(std::move(name)) {}
  explicit MemoryImageSource(std::vector<std::uint8_t> bytes, std::string name = "<memory>")
      : MemoryImageSource(std::make_shared<const std::vector<std::uint8_t>>(std::move(bytes)),
                          std::move(name)) {}

  std::uint64_t size() const override { return bytes_->size(); }
  std::size_t read_at(std::uint64_t offset, std::span<std::uint8_t> out) const override {
    if (offset >= bytes_->size()) return 0;
    const auto n = std::min<std::uint64_t>(out.size(), bytes_->size() - offset);
    std::memcpy(out.data(), bytes_->data() + offset, n);
    return static_cast<std::size_t>(n);
  }
  std::string name() const override { return name_; }
  const std::vector<std::uint8_t>& bytes() const { return *bytes_; }

 private:
  std::shared_ptr<const std::vector<std::uint8_t>> bytes_;
  std::string name_;
};

/// Access to master sectors for byte-for-byte confirmation.
class MasterCorpus {
 public:
  virtual ~MasterCorpus() = default;
  /// Fills `out` with the master bytes at offset. Returns false when the
  /// file cannot be opened or is too short.
  virtual bool read_sector(std::uint32_t master_file_id, std::uint64_t offset,
                           std::span<std::uint8_t> out) const = 0;
  virtual std::string path_of(std::uint32_t master_file_id) const = 0;
};

/// Master files on disk, resolved through a manifest. Relative manifest
/// paths are taken relative to `root`.
class FileCorpus final : public MasterCorpus {
 public:
  FileCorpus(CorpusManifest manifest, std::filesystem::path root)
      : manifest_(std::move(manifest)), root_(std::move(root)) {}

  bool read_sector(std::uint32_t id, std::uint64_t offset,
                   std::span<std::uint8_t> out) const override {
    const int fd = descriptor(id);
    if (fd < 0) return false;
    try {
      return detail::pread_full(fd, offset, out, path_of(id)) == out.size();
    } catch (const IoError&) {
      return false;
    }
  }

  std::string path_of(std::uint32_t id) const override {
    return id < manifest_.entries.size() ? manifest_.entries[id].path : std::string();
  }

  std::filesystem::path resolve(std::uint32_t id) const {
    std::filesystem::path p = path_of(id);
    return p.is_absolute() ? p : root_ / p;
  }

 private:
  int descriptor(std::uint32_t id) const {
    if (id >= manifest_.entries.size()) return -1;
    std::lock_guard lock(mu_);
    auto it = open_.find(id);
    if (it == open_.end()) {
      it = open_.emplace(id, detail::open_read_only(resolve(id))).first;
    }
    return it->second.get();
  }

  CorpusManifest manifest_;
  std::filesystem::path root_;
  mutable std::mutex mu_;
  mutable std::unordered_map<std::uint32_t, detail::FileDescriptor> open_;
};

/// Master files held in memory, indexed by id.
class MemoryCorpus final : public MasterCorpus {
 public:
  MemoryCorpus() = default;
  explicit MemoryCorpus(std::vector<std::vector<std::uint8_t>> files) : files_(std::move(files)) {}

  std::uint32_t add(std::vector<std::uint8_t> bytes) {
    files_.push_back(std::move(bytes));
    return static_cast<std::uint32_t>(files_.size() - 1);
  }
  const std::vector<std::uint8_t>& file(std::uint32_t id) const { return files_.at(id); }
  std::size_t size() const { return files_.size(); }

  bool read_sector(std::uint32_t id, std::uint64_t offset,
                   std::span<std::uint8_t> out) const override {
    if (id >= files_.size()) return false;
    const auto& f = files_[id];
    if (offset > f.size() || f.size() - offset < out.size()) return false;
    std::memcpy(out.data(), f.data() + offset, out.size());
    return true;
  }
  std::string path_of(std::uint32_t id) const override { return "mem:" + std::to_string(id); }

 private:
  std::vector<std::vector<std::uint8_t>> files_;
};

}  // namespace sectorhash
