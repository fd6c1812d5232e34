#pragma once

// Output directory handling: an advisory lock held for the whole run and
// staged artifact directories that only appear once complete.

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <filesystem>
#include <string>

#include "auedit/core/error.hpp"
#include "auedit/core/kv.hpp"

namespace auedit::pipeline {

namespace fs = std::filesystem;

class OutputLock {
 public:
  explicit OutputLock(const fs::path& out) {
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) fail(ErrorKind::io, "cannot create output directory " + out.string() + ": " + ec.message());
    const auto path = out / ".lock";
    fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) fail(ErrorKind::io, "cannot open lock file " + path.string());
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
      ::close(fd_);
      fd_ = -1;
      fail(ErrorKind::io, "output directory " + out.string() + " is in use by another run");
    }
  }
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;
  ~OutputLock() {
    if (fd_ >= 0) {
      ::flock(fd_, LOCK_UN);
      ::close(fd_);
    }
  }

 private:
  int fd_ = -1;
};

// Files are written under <out>/.<name>.partial; commit() swaps the staged
// directory in for <out>/<name>.  An uncommitted stage is removed.
class StagedDir {
 public:
  StagedDir(const fs::path& out, const std::string& name)
      : final_(out / name), stage_(out / ("." + name + ".partial")) {
    std::error_code ec;
    fs::remove_all(stage_, ec);
    fs::create_directories(stage_, ec);
    if (ec) fail(ErrorKind::io, "cannot create " + stage_.string() + ": " + ec.message());
  }
  StagedDir(const StagedDir&) = delete;
  StagedDir& operator=(const StagedDir&) = delete;
  ~StagedDir() {
    if (!committed_) {
      std::error_code ec;
      fs::remove_all(stage_, ec);
    }
  }

  const fs::path& path() const { return stage_; }
  fs::path operator/(const std::string& file) const { return stage_ / file; }

  void commit() {
    std::error_code ec;
    fs::remove_all(final_, ec);
    if (ec) fail(ErrorKind::io, "cannot replace " + final_.string() + ": " + ec.message());
    fs::rename(stage_, final_, ec);
    if (ec) fail(ErrorKind::io, "cannot move " + stage_.string() + " into place: " + ec.message());
    committed_ = true;
  }

 private:
  fs::path final_, stage_;
  bool committed_ = false;
};

inline void require_artifact(const fs::path& path, const std::string& producer) {
  require(fs::exists(path), ErrorKind::missing_artifact,
          path.string() + " not found; run `" + producer + "` with the same --out first");
}

}  // namespace auedit::pipeline
