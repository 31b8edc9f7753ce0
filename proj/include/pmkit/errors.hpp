#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace pmkit {

/// Failure categories surfaced by the toolkit. Tests match on the code,
/// messages are for humans.
enum class Errc {
  config,            // bad sizes, bad geometry, bad flags
  range,             // out-of-bounds store/flush/field access
  state,             // operation not legal in the current state
  nesting,           // transaction begun while one is active
  corruption,        // pool fails validation or a log fails its checksums
  out_of_space,      // allocator exhausted
  out_of_log,        // log slot or log region exhausted
  invalid_free,      // free of null / non-allocation / already-free block
  invalid_ref,       // reference does not name a live allocation
  name_collision,    // named allocation name already in use
  not_found,         // unknown name
  checkpoint_failed, // checkpoint could not be appended
  trace_exhausted,   // crash point beyond the recorded event trace
  table_full,        // open-addressed table at load-factor cap
  refused,           // operation declined (existing file, direct-mode harness)
  io,                // filesystem failure
};

class Error : public std::runtime_error {
 public:
  Error(Errc code, std::string what)
      : std::runtime_error(std::move(what)), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void raise(Errc code, std::string what) {
  throw Error(code, std::move(what));
}

}  // namespace pmkit
