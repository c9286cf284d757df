#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>

namespace vicl {

using Sha256Digest = std::array<std::uint8_t, 32>;

/// Incremental SHA-256.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  Sha256& update(std::string_view bytes);
  Sha256& update_byte(std::uint8_t byte);
  Sha256Digest finish();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

Sha256Digest sha256(std::string_view bytes);
std::string sha256_hex(std::string_view bytes);

std::string to_hex(const Sha256Digest& digest);
std::string to_hex(std::string_view bytes);

std::string base64_encode(std::string_view bytes);
/// Throws Error(Errc::data) on malformed input.
std::string base64_decode(std::string_view text);

}  // namespace vicl
