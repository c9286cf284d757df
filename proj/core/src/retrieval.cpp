#include "vicl/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "vicl/error.hpp"
#include "vicl/parallel.hpp"
#include "vicl/summarizer.hpp"

namespace vicl {

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    fail(Errc::dimension_mismatch,
         "cosine of vectors with dimensions " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i];
    const double y = b[i];
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  if (na == 0.0 || nb == 0.0) fail(Errc::invalid_argument, "cosine similarity is undefined for a zero vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  return cosine_similarity(a.values(), b.values());
}

std::vector<RankedCandidate> retrieve_top_k(const EmbeddingIndex& index, const EmbeddingVector& query, std::size_t k) {
  if (k == 0) fail(Errc::invalid_argument, "retrieve_top_k: k must be at least 1");
  if (index.empty()) fail(Errc::invalid_argument, "retrieve_top_k: index is empty");
  if (query.dim() != index.dim()) {
    fail(Errc::dimension_mismatch, "query dimension " + std::to_string(query.dim()) + " differs from index dimension " +
                                       std::to_string(index.dim()));
  }
  const auto& entries = index.entries();
  std::vector<double> scores(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) scores[i] = cosine_similarity(query, entries[i].vector);

  std::vector<std::size_t> order(entries.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t keep = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                    [&](std::size_t a, std::size_t b) { return scores[a] > scores[b] || (scores[a] == scores[b] && a < b); });

  std::vector<RankedCandidate> out;
  out.reserve(keep);
  for (std::size_t r = 0; r < keep; ++r) out.push_back({entries[order[r]].id, scores[order[r]], std::nullopt});
  return out;
}

std::vector<RankedCandidate> rerank_candidates(std::vector<RankedCandidate> candidates, std::string_view caption,
                                               const InferenceClient& scorer, const ImageResolver& images) {
  if (caption.empty()) fail(Errc::invalid_argument, "rerank: caption must be non-empty");
  parallel_for(candidates.size(), scorer.max_in_flight(), [&](std::size_t i) {
    try {
      const double s = scorer.score_image_text(images(candidates[i].id).bytes(), caption);
      if (!std::isfinite(s)) fail(Errc::permanent, "scorer returned a non-finite score");
      candidates[i].rerank_score = s;
    } catch (const Error& e) {
      throw Error(e.code(), "reranking candidate '" + candidates[i].id + "': " + e.what());
    }
  });
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const RankedCandidate& a, const RankedCandidate& b) { return *a.rerank_score > *b.rerank_score; });
  return candidates;
}

std::string caption_query(const ImageRef& query_image, const InferenceClient& generator, GenerationCache& cache) {
  const auto prompt_text = strategy_prompt(SummaryStrategy::Standard);
  return cache.get_or_generate(query_image.bytes(), prompt_text, generator.model_id(), [&] {
    Prompt prompt;
    prompt.append_text(prompt_text);
    prompt.append_image(query_image);
    return generator.generate(prompt);
  });
}

Selection select_demonstrations(const ImageRef& query_image, const EmbeddingIndex& index,
                                const std::vector<DemonstrationCandidate>& candidates, const SelectionOptions& options,
                                const RetrievalClients& clients, GenerationCache& cache) {
  if (options.demo_count > options.pool_size) {
    fail(Errc::invalid_argument, "demo count " + std::to_string(options.demo_count) + " exceeds pool size " +
                                     std::to_string(options.pool_size));
  }
  if (!clients.embedder) fail(Errc::invalid_argument, "select_demonstrations: no embedding client");
  if (options.rerank && (!clients.scorer || !clients.generator)) {
    fail(Errc::invalid_argument, "select_demonstrations: reranking needs scorer and generator clients");
  }

  std::unordered_map<std::string_view, const DemonstrationCandidate*> by_id;
  for (const auto& c : candidates) by_id.emplace(c.id, &c);
  auto lookup = [&](std::string_view id) -> const DemonstrationCandidate& {
    auto it = by_id.find(id);
    if (it == by_id.end()) fail(Errc::data, "index entry '" + std::string(id) + "' has no candidate record");
    return *it->second;
  };

  Selection out;
  if (options.demo_count == 0) return out;
  const auto query = clients.embedder->embed_image(query_image.bytes());
  out.pool = retrieve_top_k(index, query, options.pool_size);
  if (options.rerank) {
    out.caption = caption_query(query_image, *clients.generator, cache);
    out.pool = rerank_candidates(std::move(out.pool), out.caption, *clients.scorer,
                                 [&](std::string_view id) -> const ImageRef& { return lookup(id).image; });
  }
  const std::size_t n = std::min(options.demo_count, out.pool.size());
  for (std::size_t i = 0; i < n; ++i) out.demonstrations.push_back(lookup(out.pool[i].id));
  return out;
}

}  // namespace vicl
