#pragma once

// Visual demonstration retrieval: exact top-k cosine search over the index,
// then cross-modal reranking of the pool against a caption of the query.

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vicl/demo_store.hpp"
#include "vicl/inference_client.hpp"
#include "vicl/types.hpp"

namespace vicl {

struct RankedCandidate {
  std::string id;
  double retrieval_score = 0.0;
  std::optional<double> rerank_score;

  friend bool operator==(const RankedCandidate&, const RankedCandidate&) = default;
};

/// dot(a, b) / (|a| |b|), accumulated in double. Throws on dimension mismatch
/// (Errc::dimension_mismatch) or an all-zero vector (Errc::invalid_argument).
double cosine_similarity(std::span<const float> a, std::span<const float> b);
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

/// min(k, index size) entries by descending cosine, ties by index order.
std::vector<RankedCandidate> retrieve_top_k(const EmbeddingIndex& index, const EmbeddingVector& query, std::size_t k);

using ImageResolver = std::function<const ImageRef&(std::string_view id)>;

/// Scores every candidate image against `caption` and sorts by that score,
/// descending; ties keep the incoming order. Scorer calls may overlap, the
/// result does not depend on completion order.
std::vector<RankedCandidate> rerank_candidates(std::vector<RankedCandidate> candidates, std::string_view caption,
                                               const InferenceClient& scorer, const ImageResolver& images);

struct RetrievalClients {
  const InferenceClient* embedder = nullptr;
  const InferenceClient* scorer = nullptr;
  const InferenceClient* generator = nullptr;
};

struct SelectionOptions {
  std::size_t pool_size = 20;  // k
  std::size_t demo_count = 4;  // n
  bool rerank = true;
};

struct Selection {
  std::vector<DemonstrationCandidate> demonstrations;
  std::vector<RankedCandidate> pool;  // reranked (or retrieval-ordered) pool, for auditing
  std::string caption;                // empty when reranking is off
};

/// Generates the query caption with the standard captioning prompt; cached.
std::string caption_query(const ImageRef& query_image, const InferenceClient& generator, GenerationCache& cache);

/// Retrieve k, caption the query, rerank, keep the first n.
Selection select_demonstrations(const ImageRef& query_image, const EmbeddingIndex& index,
                                const std::vector<DemonstrationCandidate>& candidates, const SelectionOptions& options,
                                const RetrievalClients& clients, GenerationCache& cache);

}  // namespace vicl
