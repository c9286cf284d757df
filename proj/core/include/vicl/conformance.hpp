#pragma once

#include <chrono>
#include <string>
#include <vector>

namespace vicl {

struct ConformanceCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Exercises every protocol endpoint of a running server at base_url
/// ("http://host:port") with fixed requests and validates the response
/// schemas. A server without trace support passes the trace check by
/// answering with an "unsupported" error body.
std::vector<ConformanceCheck> run_conformance(const std::string& base_url,
                                              std::chrono::milliseconds timeout = std::chrono::seconds(10));

bool all_passed(const std::vector<ConformanceCheck>& checks) noexcept;

}  // namespace vicl
