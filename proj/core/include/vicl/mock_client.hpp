#pragma once

// Deterministic in-process implementation of the inference protocol. Every
// response is a pure function of (inputs, options).
//
//   hash       embed = SHA-256 seeded components in [-1, 1]
//   clustered  image bytes starting with "class<K>_" embed to e_K + jitter
//              (Euclidean jitter <= 0.01); text containing "class<K>_" does the
//              same on the scoring side, and generated captions carry the tag
//   echo-label task prompts answer with the majority demonstration label
//              (ties: first occurring; no demonstrations: first listed label)
//   scripted   fixed responses keyed by prompt hash / (image hash, text),
//              consulted before the other modes

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vicl/inference_client.hpp"

namespace vicl {

struct MockModes {
  bool clustered = false;
  bool echo_label = false;
  bool scripted = false;

  friend bool operator==(const MockModes&, const MockModes&) = default;
};

/// Parses "mock:clustered+echo-label" style endpoints.
MockModes parse_mock_modes(std::string_view endpoint);
bool is_mock_endpoint(std::string_view endpoint) noexcept;

struct MockScript {
  std::map<std::string, std::string> generate;  // prompt sha256 -> text
  std::optional<std::string> generate_default;
  std::map<std::string, double> score;  // image sha256 + "|" + text -> score
  std::optional<double> score_default;

  static MockScript load(const std::filesystem::path& path);
  static std::string score_key(std::string_view image_bytes, std::string_view text);
};

struct MockOptions {
  MockModes modes;
  std::string model_id = "mock";
  std::size_t dim = 16;
  MockScript script;
  bool trace_enabled = true;
  std::size_t trace_layers = 3;
  std::size_t trace_heads = 2;
  std::size_t image_tokens = 4;
  std::size_t max_in_flight = 4;
};

class MockClient final : public InferenceClient {
 public:
  explicit MockClient(MockOptions options);

  const std::string& model_id() const override { return options_.model_id; }
  EmbeddingVector embed_image(std::string_view image_bytes) const override;
  std::string generate(const Prompt& prompt) const override;
  double score_image_text(std::string_view image_bytes, std::string_view text) const override;
  TraceBundle fetch_trace(const Prompt& prompt, std::string_view target_answer) const override;
  std::size_t max_in_flight() const noexcept override { return options_.max_in_flight; }

  const MockOptions& options() const noexcept { return options_; }

 private:
  EmbeddingVector embed_text(std::string_view text) const;

  MockOptions options_;
};

/// Component c = map(first 8 bytes, little-endian, of SHA-256(bytes || c as u64 LE)).
EmbeddingVector mock_hash_embedding(std::string_view bytes, std::size_t dim);

/// Class index K from a "class<K>_" tag: at the start of the text when
/// prefix_only, else its first occurrence anywhere.
std::optional<std::size_t> find_class_tag(std::string_view text, bool prefix_only);

/// e_K plus hash jitter scaled so its Euclidean norm is at most 0.01.
EmbeddingVector mock_clustered_embedding(std::size_t class_index, std::string_view jitter_source,
                                         std::size_t dim);

/// Answer the echo-label mock gives for the text of a rendered task prompt,
/// or nullopt when the text is not a task prompt.
std::optional<std::string> echo_label_answer(std::string_view prompt_text);

/// Whitespace tokenisation used for mock traces. Each image part expands to
/// image_tokens tokens.
struct MockTokenization {
  std::vector<std::string> tokens;
  std::vector<std::size_t> label_positions;           // token after each non-final "Answer:"
  std::pair<std::size_t, std::size_t> image_span{0, 0};  // tokens of the last image part
};
MockTokenization tokenize_for_trace(const Prompt& prompt, std::size_t image_tokens);

}  // namespace vicl
