#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "support/test_support.hpp"
#include "vicl/error.hpp"
#include "vicl/mock_client.hpp"
#include "vicl/retrieval.hpp"
#include "vicl/splitmix64.hpp"

namespace vicl {
namespace {

std::vector<float> random_vector(SplitMix64& rng, std::size_t dim) {
  std::vector<float> v(dim);
  for (auto& x : v) x = static_cast<float>(2.0 * rng.unit() - 1.0);
  return v;
}

// Plain double loop, separate from the library code path.
double reference_cosine(const std::vector<float>& a, const std::vector<float>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += double(a[i]) * double(b[i]);
    na += double(a[i]) * double(a[i]);
    nb += double(b[i]) * double(b[i]);
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

TEST(Cosine, MatchesReferenceValue) {
  const auto& o = testing::oracles().at("cosine");
  const EmbeddingVector a(o.at("a").get<std::vector<float>>());
  const EmbeddingVector b(o.at("b").get<std::vector<float>>());
  EXPECT_NEAR(cosine_similarity(a, b), o.at("expected").get<double>(), 1e-12);
}

TEST(Cosine, ErrorsOnMismatchAndZeroVectors) {
  const EmbeddingVector a({1.0f, 0.0f});
  try {
    cosine_similarity(a, EmbeddingVector({1.0f}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::dimension_mismatch);
  }
  EXPECT_THROW(cosine_similarity(a, EmbeddingVector({0.0f, 0.0f})), Error);
}

TEST(Cosine, SymmetricScaleInvariantAndBounded) {
  SplitMix64 rng(11);
  for (int t = 0; t < 2000; ++t) {
    const auto a = random_vector(rng, 16);
    auto b = random_vector(rng, 16);
    const double ab = cosine_similarity(std::span<const float>(a), std::span<const float>(b));
    EXPECT_NEAR(ab, cosine_similarity(std::span<const float>(b), std::span<const float>(a)), 1e-12);
    EXPECT_NEAR(ab, reference_cosine(a, b), 1e-12);
    EXPECT_LE(std::abs(ab), 1.0 + 1e-12);
    const float c = static_cast<float>(0.25 + 4.0 * rng.unit());
    for (auto& x : b) x *= c;
    EXPECT_NEAR(ab, cosine_similarity(std::span<const float>(a), std::span<const float>(b)), 1e-6);
  }
}

TEST(TopK, EqualsFullSortOracle) {
  SplitMix64 rng(5);
  for (int instance = 0; instance < 20; ++instance) {
    EmbeddingIndex index(16);
    std::vector<std::vector<float>> vectors;
    for (int i = 0; i < 200; ++i) {
      vectors.push_back(random_vector(rng, 16));
      index.add("v" + std::to_string(i), EmbeddingVector(vectors.back()));
    }
    const auto query = random_vector(rng, 16);
    std::vector<std::size_t> order(200);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> score(200);
    for (std::size_t i = 0; i < 200; ++i) score[i] = reference_cosine(vectors[i], query);
    std::stable_sort(order.begin(), order.end(), [&](auto x, auto y) { return score[x] > score[y]; });
    for (std::size_t k : {1u, 5u, 10u}) {
      const auto got = retrieve_top_k(index, EmbeddingVector(query), k);
      ASSERT_EQ(got.size(), k);
      for (std::size_t r = 0; r < k; ++r) EXPECT_EQ(got[r].id, "v" + std::to_string(order[r]));
    }
  }
}

TEST(TopK, TiesBreakByIndexOrderAndKIsClamped) {
  EmbeddingIndex index(2);
  index.add("first", EmbeddingVector({1.0f, 0.0f}));
  index.add("second", EmbeddingVector({2.0f, 0.0f}));
  index.add("third", EmbeddingVector({0.0f, 1.0f}));
  const auto got = retrieve_top_k(index, EmbeddingVector({1.0f, 0.0f}), 10);
  ASSERT_EQ(got.size(), 3u);
  EXPECT_EQ(got[0].id, "first");
  EXPECT_EQ(got[1].id, "second");
  EXPECT_EQ(got[2].id, "third");
  EXPECT_THROW(retrieve_top_k(index, EmbeddingVector({1.0f, 0.0f}), 0), Error);
}

TEST(Rerank, SortsByScoreAndKeepsTieOrder) {
  MockOptions options;
  options.modes.scripted = true;
  options.script.score[MockScript::score_key("img-a", "cap")] = 0.1;
  options.script.score[MockScript::score_key("img-b", "cap")] = 0.9;
  options.script.score[MockScript::score_key("img-c", "cap")] = 0.1;
  const MockClient scorer(options);
  std::map<std::string, ImageRef, std::less<>> images{
      {"a", ImageRef::from_bytes("img-a")}, {"b", ImageRef::from_bytes("img-b")}, {"c", ImageRef::from_bytes("img-c")}};
  std::vector<RankedCandidate> pool{{"a", 0.9, {}}, {"b", 0.8, {}}, {"c", 0.7, {}}};
  const auto out = rerank_candidates(pool, "cap", scorer,
                                     [&](std::string_view id) -> const ImageRef& { return images.find(id)->second; });
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0].id, "b");
  EXPECT_EQ(out[1].id, "a");
  EXPECT_EQ(out[2].id, "c");
  EXPECT_DOUBLE_EQ(*out[0].rerank_score, 0.9);
}

TEST(Selection, ClusteredMockKeepsSameClassDemonstrations) {
  testing::TempDir dir;
  const auto manifest = testing::write_synthetic_dataset(dir.path());
  const auto m = load_manifest(manifest);
  MockOptions options;
  options.modes = parse_mock_modes("mock:clustered+echo-label");
  const MockClient client(options);
  const auto index = build_index(m.candidates, client);
  GenerationCache cache;
  for (const auto& q : m.tests) {
    const auto sel = select_demonstrations(q.image, index, m.candidates, {20, 4, true}, {&client, &client, &client}, cache);
    ASSERT_EQ(sel.demonstrations.size(), 4u);
    EXPECT_EQ(sel.pool.size(), 20u);
    EXPECT_NE(sel.caption.find(q.id.substr(0, q.id.find('_') + 1)), std::string::npos) << sel.caption;
    for (const auto& d : sel.demonstrations) EXPECT_EQ(d.answer, q.answer) << q.id;
  }
}

TEST(Selection, RejectsDemoCountAbovePool) {
  const MockClient client(MockOptions{});
  GenerationCache cache;
  EmbeddingIndex index(16);
  EXPECT_THROW(select_demonstrations(ImageRef::from_bytes("q"), index, {}, {2, 3, false}, {&client, &client, &client},
                                     cache),
               Error);
}

}  // namespace
}  // namespace vicl
