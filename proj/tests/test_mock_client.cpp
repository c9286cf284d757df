#include <gtest/gtest.h>

#include <cmath>

#include "support/test_support.hpp"
#include "vicl/composer.hpp"
#include "vicl/error.hpp"
#include "vicl/mock_client.hpp"
#include "vicl/retrieval.hpp"

namespace vicl {
namespace {

MockClient mock(const std::string& modes, std::size_t dim = 16) {
  MockOptions o;
  o.modes = parse_mock_modes(modes);
  o.dim = dim;
  return MockClient(o);
}

TEST(MockModes, ParseCombinations) {
  EXPECT_EQ(parse_mock_modes("mock:hash"), MockModes{});
  const auto m = parse_mock_modes("mock:clustered+echo-label+scripted");
  EXPECT_TRUE(m.clustered && m.echo_label && m.scripted);
  EXPECT_THROW(parse_mock_modes("mock:wat"), Error);
  EXPECT_THROW(parse_mock_modes("http://x"), Error);
  EXPECT_TRUE(is_mock_endpoint("mock:hash"));
  EXPECT_FALSE(is_mock_endpoint("http://127.0.0.1:1"));
}

std::vector<float> as_vector(std::span<const float> s) { return {s.begin(), s.end()}; }

TEST(HashEmbedding, MatchesReference) {
  const auto expected = testing::oracles().at("mock_hash_embedding_hello_dim4").get<std::vector<float>>();
  EXPECT_EQ(as_vector(mock_hash_embedding("hello", 4).values()), expected);
  EXPECT_EQ(as_vector(mock("mock:hash", 4).embed_image("hello").values()), expected);
}

TEST(ClusteredEmbedding, MatchesReferenceAndStaysNearTheAxis) {
  const auto expected = testing::oracles().at("mock_clustered_class2_dim8").get<std::vector<float>>();
  EXPECT_EQ(as_vector(mock("mock:clustered", 8).embed_image("class2_0001").values()), expected);
  const auto v = mock("mock:clustered").embed_image("class5_abc");
  double jitter = 0.0;
  for (std::size_t c = 0; c < v.dim(); ++c) {
    const double d = v.values()[c] - (c == 5 ? 1.0 : 0.0);
    jitter += d * d;
  }
  EXPECT_LE(std::sqrt(jitter), 0.01 + 1e-6);
  // Untagged images fall back to the hash embedding.
  EXPECT_EQ(mock("mock:clustered").embed_image("plain"), mock_hash_embedding("plain", 16));
  EXPECT_THROW(mock("mock:clustered", 4).embed_image("class9_x"), Error);
}

TEST(ClusteredScoring, PrefersTheTaggedClass) {
  const auto m = mock("mock:clustered");
  EXPECT_GT(m.score_image_text("class1_a", "a photo tagged class1_"), 0.99);
  EXPECT_LT(std::abs(m.score_image_text("class1_a", "a photo tagged class2_")), 0.05);
}

TEST(EchoLabel, AnswersWithTheMajorityDemonstrationLabel) {
  const LabelSet labels({"happy", "sad", "angry"}, DatasetKind::Emotion);
  auto demo = [](const char* summary, const char* label) {
    return ComposedDemonstration{std::string(summary), "q", label, summary};
  };
  const auto q = ImageRef::from_bytes("query");
  const auto m = mock("mock:echo-label");
  std::vector<ComposedDemonstration> demos{demo("a", "sad"), demo("b", "angry"), demo("c", "sad")};
  EXPECT_EQ(m.generate(render_prompt(PromptMode::VICL, labels, demos, q)), "sad");
  std::vector<ComposedDemonstration> tie{demo("a", "angry"), demo("b", "sad")};
  EXPECT_EQ(m.generate(render_prompt(PromptMode::VICL, labels, tie, q)), "angry");
  EXPECT_EQ(m.generate(render_prompt(PromptMode::ZeroShot, labels, {}, q)), "happy");
  EXPECT_EQ(echo_label_answer("no task here"), std::nullopt);
}

TEST(Echo, IsDeterministicAndCarriesClassTagWhenClustered) {
  Prompt p;
  p.append_text("Describe.");
  p.append_image(ImageRef::from_bytes("class3_xyz"));
  const auto plain = mock("mock:hash");
  EXPECT_EQ(plain.generate(p), plain.generate(p));
  EXPECT_EQ(plain.generate(p).find("class3_"), std::string::npos);
  EXPECT_NE(mock("mock:clustered").generate(p).find("tagged class3_"), std::string::npos);
}

TEST(Scripted, OverridesAndFallsThrough) {
  testing::TempDir dir;
  Prompt p;
  p.append_text("hi");
  testing::write_file(dir / "s.json", nlohmann::json{{"generate", {{p.sha256_hex(), "scripted!"}}},
                                                     {"score", {{MockScript::score_key("img", "t"), 0.75}}}}
                                          .dump());
  MockOptions o;
  o.modes = parse_mock_modes("mock:scripted");
  o.script = MockScript::load(dir / "s.json");
  const MockClient m(o);
  EXPECT_EQ(m.generate(p), "scripted!");
  EXPECT_DOUBLE_EQ(m.score_image_text("img", "t"), 0.75);
  Prompt other;
  other.append_text("other");
  EXPECT_EQ(m.generate(other), mock("mock:hash").generate(other));
}

TEST(MockTrace, ValidatesAndLocatesLabelsAndImage) {
  const LabelSet labels({"happy", "sad"}, DatasetKind::Emotion);
  std::vector<ComposedDemonstration> demos{{std::string("a b"), "q", "happy", "d1"}, {std::string("c"), "q", "sad", "d2"}};
  const auto prompt = render_prompt(PromptMode::VICL, labels, demos, ImageRef::from_bytes("query"));
  const auto m = mock("mock:hash");
  const auto bundle = m.fetch_trace(prompt, "happy");
  bundle.validate();
  const auto tok = tokenize_for_trace(prompt, 4);
  ASSERT_EQ(bundle.label_positions.size(), 2u);
  EXPECT_EQ(tok.tokens[bundle.label_positions[0]], "happy.");
  EXPECT_EQ(tok.tokens[bundle.label_positions[1]], "sad.");
  EXPECT_EQ(bundle.image_span.second - bundle.image_span.first, 4u);
  EXPECT_EQ(bundle.target_position, bundle.seq_len - 1);
  EXPECT_EQ(bundle, m.fetch_trace(prompt, "happy"));

  MockOptions off;
  off.trace_enabled = false;
  try {
    MockClient(off).fetch_trace(prompt, "happy");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::unsupported);
  }
}

TEST(MakeClient, ValidatesConfig) {
  ClientConfig c;
  c.endpoint = "ftp://nope";
  EXPECT_THROW(make_client(c), Error);
  c.endpoint = "mock:hash";
  c.max_in_flight = 0;
  EXPECT_THROW(make_client(c), Error);
  c.max_in_flight = 2;
  EXPECT_EQ(make_client(c)->max_in_flight(), 2u);
}

}  // namespace
}  // namespace vicl
