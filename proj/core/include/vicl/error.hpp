#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vicl {

enum class Errc {
  invalid_argument,    // caller broke a precondition
  data,                // malformed or inconsistent input data
  bad_magic,           // index file: wrong magic bytes
  bad_version,         // index file: unsupported version
  truncated,           // index file: ended early
  dimension_mismatch,  // embedding dims disagree
  invariant,           // a domain invariant was violated
  generation,          // a model produced unusable output (e.g. empty text)
  transport,           // network failure or retryable server error
  permanent,           // server rejected the request (4xx)
  unsupported,         // endpoint exists but the backend lacks the capability
};

std::string_view to_string(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message) : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

  bool is_client_error() const noexcept {
    return code_ == Errc::transport || code_ == Errc::permanent || code_ == Errc::unsupported;
  }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message) { throw Error(code, message); }

}  // namespace vicl
