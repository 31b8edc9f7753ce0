#include "pmkit/persist_domain.hpp"

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cstring>
#include <random>

#include "pmkit/errors.hpp"
#include "pmkit/layout.hpp"

namespace pmkit {

namespace {

void check_size(std::uint64_t size) {
  if (size == 0 || size % kFlushLine != 0)
    raise(Errc::config, "domain size must be a positive multiple of 64");
}

}  // namespace

std::unique_ptr<PersistDomain> PersistDomain::create_sim(std::uint64_t size) {
  check_size(size);
  auto d = std::unique_ptr<PersistDomain>(new PersistDomain());
  d->simulate_ = true;
  d->size_ = size;
  d->vol_.assign(size, std::byte{0});
  d->dur_.assign(size, std::byte{0});
  d->initial_ = d->dur_;
  d->base_ = d->vol_.data();
  d->tracing_ = true;
  return d;
}

std::unique_ptr<PersistDomain> PersistDomain::open_sim(
    std::vector<std::byte> image) {
  check_size(image.size());
  auto d = std::unique_ptr<PersistDomain>(new PersistDomain());
  d->simulate_ = true;
  d->size_ = image.size();
  d->vol_ = image;
  d->dur_ = std::move(image);
  d->initial_ = d->dur_;
  d->base_ = d->vol_.data();
  d->tracing_ = true;
  return d;
}

std::unique_ptr<PersistDomain> PersistDomain::create_direct(
    const std::string& path, std::uint64_t size) {
  check_size(size);
  int fd = ::open(path.c_str(), O_RDWR | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) raise(Errc::io, "cannot create " + path);
  if (::ftruncate(fd, static_cast<off_t>(size)) != 0) {
    ::close(fd);
    raise(Errc::io, "cannot size " + path);
  }
  void* base = ::mmap(nullptr, size, PROT_READ | PROT_WRITE, MAP_SHARED, fd, 0);
  if (base == MAP_FAILED) {
    ::close(fd);
    raise(Errc::io, "cannot map " + path);
  }
  auto d = std::unique_ptr<PersistDomain>(new PersistDomain());
  d->simulate_ = false;
  d->size_ = size;
  d->base_ = static_cast<std::byte*>(base);
  d->fd_ = fd;
  return d;
}

std::unique_ptr<PersistDomain> PersistDomain::open_direct(
    const std::string& path) {
  int fd = ::open(path.c_str(), O_RDWR);
  if (fd < 0) raise(Errc::io, "cannot open " + path);
  struct stat st{};
  if (::fstat(fd, &st) != 0) {
    ::close(fd);
    raise(Errc::io, "cannot stat " + path);
  }
  auto size = static_cast<std::uint64_t>(st.st_size);
  if (size == 0 || size % kFlushLine != 0) {
    ::close(fd);
    raise(Errc::corruption, path + " has an invalid size");
  }
  void* base = ::mmap(nullptr, size, PROT_READ | PROT_WRITE, MAP_SHARED, fd, 0);
  if (base == MAP_FAILED) {
    ::close(fd);
    raise(Errc::io, "cannot map " + path);
  }
  auto d = std::unique_ptr<PersistDomain>(new PersistDomain());
  d->simulate_ = false;
  d->size_ = size;
  d->base_ = static_cast<std::byte*>(base);
  d->fd_ = fd;
  return d;
}

PersistDomain::~PersistDomain() {
  if (!simulate_ && base_ != nullptr) {
    ::msync(base_, size_, MS_SYNC);
    ::munmap(base_, size_);
    ::close(fd_);
  }
}

void PersistDomain::check_range(std::uint64_t off, std::uint64_t len) const {
  if (off > size_ || len > size_ - off)
    raise(Errc::range, "access beyond domain end");
}

void PersistDomain::store(std::uint64_t off, std::span<const std::byte> data) {
  check_range(off, data.size());
  if (data.empty()) return;
  if (simulate_ && tracing_) {
    std::lock_guard lk(mu_);
    std::memcpy(base_ + off, data.data(), data.size());
    trace_.push_back(TraceOp{TraceOp::kStore, off, data.size(),
                             {data.begin(), data.end()}});
  } else {
    std::memcpy(base_ + off, data.data(), data.size());
  }
}

void PersistDomain::read(std::uint64_t off, std::span<std::byte> out) const {
  check_range(off, out.size());
  if (!out.empty()) std::memcpy(out.data(), base_ + off, out.size());
}

std::uint64_t PersistDomain::load_u64(std::uint64_t off) const {
  check_range(off, 8);
  return bytes::load_u64(base_ + off);
}

std::uint32_t PersistDomain::load_u32(std::uint64_t off) const {
  check_range(off, 4);
  return bytes::load_u32(base_ + off);
}

std::int64_t PersistDomain::load_i64(std::uint64_t off) const {
  check_range(off, 8);
  return bytes::load_i64(base_ + off);
}

void PersistDomain::store_u64(std::uint64_t off, std::uint64_t v) {
  std::byte buf[8];
  bytes::store_u64(buf, v);
  store(off, buf);
}

void PersistDomain::store_u32(std::uint64_t off, std::uint32_t v) {
  std::byte buf[4];
  bytes::store_u32(buf, v);
  store(off, buf);
}

void PersistDomain::store_i64(std::uint64_t off, std::int64_t v) {
  std::byte buf[8];
  bytes::store_i64(buf, v);
  store(off, buf);
}

void PersistDomain::mark_lines(std::uint64_t off, std::uint64_t len) {
  if (len == 0) return;
  std::uint64_t first = off / kFlushLine;
  std::uint64_t last = (off + len - 1) / kFlushLine;
  for (std::uint64_t line = first; line <= last; ++line) {
    pending_.insert(line);
    counters_.bytes_flushed += kFlushLine;
  }
}

std::uint64_t PersistDomain::flush(std::uint64_t off, std::uint64_t len) {
  check_range(off, len);
  std::lock_guard lk(mu_);
  mark_lines(off, len);
  counters_.flush_calls += 1;
  events_ += 1;
  if (simulate_ && tracing_)
    trace_.push_back(TraceOp{TraceOp::kFlush, off, len, {}});
  return events_;
}

std::uint64_t PersistDomain::fence() {
  std::lock_guard lk(mu_);
  if (simulate_) {
    for (std::uint64_t line : pending_) {
      std::uint64_t off = line * kFlushLine;
      std::memcpy(dur_.data() + off, vol_.data() + off, kFlushLine);
    }
  } else if (!pending_.empty()) {
    // msync wants page-aligned ranges; merge pending lines into page runs.
    std::set<std::uint64_t> pages;
    for (std::uint64_t line : pending_)
      pages.insert(line * kFlushLine / layout::kPageSize);
    auto it = pages.begin();
    while (it != pages.end()) {
      std::uint64_t start = *it;
      std::uint64_t end = start + 1;
      ++it;
      while (it != pages.end() && *it == end) {
        ++end;
        ++it;
      }
      std::uint64_t bytes =
          std::min((end - start) * layout::kPageSize, size_ - start * layout::kPageSize);
      if (::msync(base_ + start * layout::kPageSize, bytes, MS_SYNC) != 0)
        raise(Errc::io, "msync failed");
    }
  }
  pending_.clear();
  counters_.fence_calls += 1;
  events_ += 1;
  if (simulate_ && tracing_) trace_.push_back(TraceOp{TraceOp::kFence, 0, 0, {}});
  return events_;
}

std::uint64_t PersistDomain::event_count() const {
  std::lock_guard lk(mu_);
  return events_;
}

DomainCounters PersistDomain::counters() const {
  std::lock_guard lk(mu_);
  return counters_;
}

void PersistDomain::set_tracing(bool on) {
  if (!simulate_) raise(Errc::state, "tracing needs simulate mode");
  std::lock_guard lk(mu_);
  if (on == tracing_) return;
  if (on && !pending_.empty())
    raise(Errc::state, "cannot start tracing with unfenced lines");
  trace_.clear();
  if (on) {
    initial_ = dur_;
    trace_base_ = events_;
  }
  tracing_ = on;
}

std::vector<std::byte> PersistDomain::durable_snapshot() const {
  if (!simulate_) raise(Errc::state, "no durable image in direct mode");
  std::lock_guard lk(mu_);
  return dur_;
}

std::vector<std::byte> PersistDomain::materialize_crash(
    std::uint64_t event_index) const {
  return materialize_inner(event_index, nullptr);
}

std::vector<std::byte> PersistDomain::materialize_crash(
    std::uint64_t event_index, std::uint64_t adversary_seed) const {
  return materialize_inner(event_index, &adversary_seed);
}

std::vector<std::byte> PersistDomain::materialize_inner(
    std::uint64_t event_index, const std::uint64_t* adversary_seed) const {
  if (!simulate_) raise(Errc::state, "crash images need simulate mode");
  std::lock_guard lk(mu_);
  if (!tracing_) raise(Errc::state, "crash images need tracing");
  if (event_index < trace_base_ || event_index > events_)
    raise(Errc::trace_exhausted, "event index outside the traced window");

  std::vector<std::byte> vol = initial_;
  std::vector<std::byte> dur = initial_;
  std::set<std::uint64_t> pending;
  std::uint64_t seen = trace_base_;
  for (const TraceOp& op : trace_) {
    if (seen == event_index) break;
    switch (op.kind) {
      case TraceOp::kStore:
        std::memcpy(vol.data() + op.off, op.bytes.data(), op.len);
        break;
      case TraceOp::kFlush:
        if (op.len != 0) {
          std::uint64_t first = op.off / kFlushLine;
          std::uint64_t last = (op.off + op.len - 1) / kFlushLine;
          for (std::uint64_t line = first; line <= last; ++line)
            pending.insert(line);
        }
        seen += 1;
        break;
      case TraceOp::kFence:
        for (std::uint64_t line : pending) {
          std::uint64_t off = line * kFlushLine;
          std::memcpy(dur.data() + off, vol.data() + off, kFlushLine);
        }
        pending.clear();
        seen += 1;
        break;
    }
  }

  // Flushed-but-unfenced lines may or may not have reached durable state;
  // the adversary decides per line, deterministically in (seed, event).
  if (adversary_seed) {
    std::mt19937_64 rng(*adversary_seed ^
                        (event_index * 0x9E3779B97F4A7C15ull));
    for (std::uint64_t line : pending) {
      if (rng() & 1) {
        std::uint64_t off = line * kFlushLine;
        std::memcpy(dur.data() + off, vol.data() + off, kFlushLine);
      }
    }
  }
  return dur;
}

}  // namespace pmkit
