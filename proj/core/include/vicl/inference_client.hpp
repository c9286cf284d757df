#pragma once

// The protocol boundary to every model: image embedding, generation over
// mixed text/image prompts, image-text scoring and attention-trace export.

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "vicl/types.hpp"

namespace vicl {

/// Per-layer, per-head attention and gradient tensors of one forward/backward
/// pass, plus the token positions the flow analysis needs.
struct TraceBundle {
  std::size_t num_layers = 0;
  std::size_t num_heads = 0;
  std::size_t seq_len = 0;
  std::vector<double> attention;  // [layer][head][seq][seq], row-major
  std::vector<double> grad;       // same shape
  std::vector<std::size_t> label_positions;
  std::size_t target_position = 0;
  std::pair<std::size_t, std::size_t> image_span{0, 0};  // half-open

  std::size_t layer_stride() const noexcept { return num_heads * seq_len * seq_len; }
  std::size_t offset(std::size_t layer, std::size_t head, std::size_t i, std::size_t j) const noexcept {
    return ((layer * num_heads + head) * seq_len + i) * seq_len + j;
  }
  double attention_at(std::size_t l, std::size_t h, std::size_t i, std::size_t j) const {
    return attention[offset(l, h, i, j)];
  }
  double grad_at(std::size_t l, std::size_t h, std::size_t i, std::size_t j) const {
    return grad[offset(l, h, i, j)];
  }

  /// Checks shapes, finiteness, causality, row normalisation (1 +- 1e-4) and
  /// that label positions, target and image span are disjoint and in range.
  /// Throws Error(Errc::invariant).
  void validate() const;

  friend bool operator==(const TraceBundle&, const TraceBundle&) = default;
};

void to_json(nlohmann::json& j, const TraceBundle& v);
/// Parses without validating; call validate() on the result.
void from_json(const nlohmann::json& j, TraceBundle& v);

TraceBundle load_trace_file(const std::filesystem::path& path);
void save_trace_file(const TraceBundle& bundle, const std::filesystem::path& path);

/// Seeded random bundle satisfying every TraceBundle invariant: attention rows
/// are positive over j <= i and normalised, gradients uniform in [-1, 1] on the
/// causal triangle and zero above it.
TraceBundle make_synthetic_trace(std::uint64_t seed, std::size_t num_layers, std::size_t num_heads,
                                 std::size_t seq_len, std::vector<std::size_t> label_positions,
                                 std::size_t target_position,
                                 std::pair<std::size_t, std::size_t> image_span);

/// Model services. Implementations must be safe to call from several threads.
class InferenceClient {
 public:
  virtual ~InferenceClient() = default;

  virtual const std::string& model_id() const = 0;
  virtual EmbeddingVector embed_image(std::string_view image_bytes) const = 0;
  virtual std::string generate(const Prompt& prompt) const = 0;
  virtual double score_image_text(std::string_view image_bytes, std::string_view text) const = 0;
  virtual TraceBundle fetch_trace(const Prompt& prompt, std::string_view target_answer) const = 0;

  /// Upper bound on concurrent outstanding requests callers should issue.
  virtual std::size_t max_in_flight() const noexcept { return 1; }
};

struct ClientConfig {
  /// "http://host:port" or "mock:<mode>[+<mode>...]" with modes from
  /// {hash, clustered, echo-label, scripted}.
  std::string endpoint = "mock:hash";
  std::string model_id = "mock";
  std::chrono::milliseconds timeout{30000};
  std::size_t max_in_flight = 4;
  std::size_t retries = 2;
  /// JSON script for mock:scripted.
  std::filesystem::path script_path;
  std::size_t mock_dim = 16;

  void validate() const;
};

std::shared_ptr<InferenceClient> make_client(const ClientConfig& config);

}  // namespace vicl
