#include <gtest/gtest.h>

#include "support/test_support.hpp"
#include "vicl/error.hpp"
#include "vicl/hashing.hpp"
#include "vicl/splitmix64.hpp"

namespace vicl {
namespace {

using testing::oracles;

TEST(Sha256, MatchesReferenceVectors) {
  for (const auto& [input, hex] : oracles().at("sha256").items()) {
    EXPECT_EQ(sha256_hex(input), hex.get<std::string>()) << "input '" << input << "'";
  }
}

TEST(Sha256, IncrementalEqualsOneShot) {
  Sha256 h;
  h.update("ab").update_byte('c');
  EXPECT_EQ(to_hex(h.finish()), sha256_hex("abc"));
}

TEST(Base64, RoundTripsKnownVectors) {
  for (const auto& [plain, encoded] : oracles().at("base64").items()) {
    EXPECT_EQ(base64_encode(plain), encoded.get<std::string>());
    EXPECT_EQ(base64_decode(encoded.get<std::string>()), plain);
  }
}

TEST(Base64, RoundTripsBinary) {
  std::string bytes;
  for (int i = 0; i < 256; ++i) bytes.push_back(static_cast<char>(i));
  EXPECT_EQ(base64_decode(base64_encode(bytes)), bytes);
}

TEST(Base64, RejectsMalformedInput) {
  try {
    base64_decode("abc$");
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::data);
  }
}

TEST(SplitMix64, MatchesReferenceSequence) {
  for (const auto& [seed, values] : oracles().at("splitmix64").at("next").items()) {
    SplitMix64 rng(std::stoull(seed));
    for (const auto& v : values) EXPECT_EQ(rng.next(), std::stoull(v.get<std::string>())) << "seed " << seed;
  }
}

TEST(SplitMix64, UnitBelowAndShuffleMatchReference) {
  const auto& o = oracles().at("splitmix64");
  SplitMix64 a(42);
  for (const auto& u : o.at("unit_seed42")) EXPECT_EQ(a.unit(), u.get<double>());
  SplitMix64 b(42);
  for (const auto& v : o.at("below10_seed42")) EXPECT_EQ(b.below(10), v.get<std::size_t>());
  std::vector<int> items{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  SplitMix64(42).shuffle(items);
  EXPECT_EQ(items, o.at("shuffle10_seed42").get<std::vector<int>>());
}

TEST(SplitMix64, UnitStaysInHalfOpenInterval) {
  SplitMix64 rng(7);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.unit();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

}  // namespace
}  // namespace vicl
