#pragma once

#include <cstdio>
#include <filesystem>
#include <string>

#include <unistd.h>

#include "pmkit/persist_domain.hpp"
#include "pmkit/writer.hpp"

namespace pmkit::test {

// Unique scratch path per call; removed by the destructor.
class TempFile {
 public:
  explicit TempFile(const std::string& stem) {
    static int seq = 0;
    path_ = (std::filesystem::temp_directory_path() /
             (stem + "-" + std::to_string(::getpid()) + "-" +
              std::to_string(seq++)))
                .string();
    std::filesystem::remove(path_);
  }
  ~TempFile() { std::filesystem::remove(path_); }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

// store + flush + fence per call; for tests that poke the pool outside any
// transaction engine.
class RawWriter final : public DurableWriter {
 public:
  explicit RawWriter(PersistDomain& d) : d_(d) {}
  void write_at(std::uint64_t off, std::span<const std::byte> data) override {
    d_.store(off, data);
    d_.flush(off, data.size());
    d_.fence();
  }

 private:
  PersistDomain& d_;
};

}  // namespace pmkit::test
