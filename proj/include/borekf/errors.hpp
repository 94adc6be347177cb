#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace borekf {

/// Failure categories. Values double as CLI exit codes.
enum class errc {
  io = 1,                 // unreadable / unwritable files
  config = 2,             // invalid parameters or configuration
  parse = 3,              // malformed input data
  numerical = 4,          // singular matrices, divergence
  insufficient_data = 5,  // not enough data to proceed
};

inline const char* errc_name(errc c) {
  switch (c) {
    case errc::io: return "io";
    case errc::config: return "config";
    case errc::parse: return "parse";
    case errc::numerical: return "numerical";
    case errc::insufficient_data: return "insufficient-data";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(errc code, std::string msg) : std::runtime_error(std::move(msg)), code_(code) {}
  errc code() const noexcept { return code_; }
  int exit_code() const noexcept { return static_cast<int>(code_); }

 private:
  errc code_;
};

/// EM failed to make progress; carries the per-iteration log-likelihoods.
class EmDivergenceError : public Error {
 public:
  EmDivergenceError(std::string msg, std::vector<double> ll_trace)
      : Error(errc::numerical, std::move(msg)), ll_trace_(std::move(ll_trace)) {}
  const std::vector<double>& ll_trace() const noexcept { return ll_trace_; }

 private:
  std::vector<double> ll_trace_;
};

[[noreturn]] inline void throw_config(const std::string& msg) { throw Error(errc::config, msg); }
[[noreturn]] inline void throw_parse(const std::string& msg) { throw Error(errc::parse, msg); }
[[noreturn]] inline void throw_numerical(const std::string& msg) { throw Error(errc::numerical, msg); }
[[noreturn]] inline void throw_insufficient(const std::string& msg) {
  throw Error(errc::insufficient_data, msg);
}
[[noreturn]] inline void throw_io(const std::string& msg) { throw Error(errc::io, msg); }

}  // namespace borekf
