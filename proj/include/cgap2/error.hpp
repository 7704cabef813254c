#pragma once

#include <stdexcept>
#include <string>

namespace cgap2 {

enum class ErrorKind {
  Shape,       // operand shapes do not satisfy an op contract
  Usage,       // API misuse (e.g. backward on a non-scalar)
  Config,      // invalid configuration value
  Window,      // sequence too short for a sampling window
  Data,        // dataset missing, malformed or empty
  Phase,       // training phase precondition violated
  Optimizer,   // optimizer invariant violated
  Checkpoint,  // checkpoint file rejected
  Statistics,  // degenerate batch statistics
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Raised by the sampler when a sequence cannot hold the requested window.
class WindowError : public Error {
 public:
  WindowError(const std::string& what, std::size_t required_length)
      : Error(ErrorKind::Window, what), required_length_(required_length) {}
  /// Minimal sequence length that would have admitted the window.
  std::size_t required_length() const noexcept { return required_length_; }

 private:
  std::size_t required_length_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace cgap2
