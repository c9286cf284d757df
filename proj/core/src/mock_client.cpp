#include "vicl/mock_client.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "vicl/error.hpp"
#include "vicl/hashing.hpp"

namespace vicl {

namespace {

constexpr std::string_view kMockPrefix = "mock:";
constexpr double kClusterJitter = 0.01;

std::uint64_t le_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::string u64_le_bytes(std::uint64_t v) {
  std::string out(8, '\0');
  for (int i = 0; i < 8; ++i) out[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xFF);
  return out;
}

const ImagePart* first_image(const Prompt& prompt) {
  for (const auto& part : prompt.parts) {
    if (const auto* img = std::get_if<ImagePart>(&part)) return img;
  }
  return nullptr;
}

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

}  // namespace

bool is_mock_endpoint(std::string_view endpoint) noexcept { return endpoint.substr(0, kMockPrefix.size()) == kMockPrefix; }

MockModes parse_mock_modes(std::string_view endpoint) {
  if (!is_mock_endpoint(endpoint)) fail(Errc::invalid_argument, "not a mock endpoint: '" + std::string(endpoint) + "'");
  MockModes modes;
  std::string_view rest = endpoint.substr(kMockPrefix.size());
  if (rest.empty()) fail(Errc::invalid_argument, "mock endpoint names no mode");
  while (!rest.empty()) {
    const auto plus = rest.find('+');
    const std::string_view mode = rest.substr(0, plus);
    if (mode == "hash") {
      // default embedding behaviour
    } else if (mode == "clustered") {
      modes.clustered = true;
    } else if (mode == "echo-label") {
      modes.echo_label = true;
    } else if (mode == "scripted") {
      modes.scripted = true;
    } else {
      fail(Errc::invalid_argument, "unknown mock mode '" + std::string(mode) +
                                       "' (expected hash, clustered, echo-label or scripted)");
    }
    rest = plus == std::string_view::npos ? std::string_view{} : rest.substr(plus + 1);
  }
  return modes;
}

MockScript MockScript::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::data, "cannot read mock script '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
    MockScript script;
    if (j.contains("generate")) script.generate = j.at("generate").get<std::map<std::string, std::string>>();
    if (j.contains("generate_default") && !j.at("generate_default").is_null()) {
      script.generate_default = j.at("generate_default").get<std::string>();
    }
    if (j.contains("score")) script.score = j.at("score").get<std::map<std::string, double>>();
    if (j.contains("score_default") && !j.at("score_default").is_null()) {
      script.score_default = j.at("score_default").get<double>();
    }
    return script;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::data, "mock script '" + path.string() + "': " + e.what());
  }
}

std::string MockScript::score_key(std::string_view image_bytes, std::string_view text) {
  return sha256_hex(image_bytes) + "|" + std::string(text);
}

EmbeddingVector mock_hash_embedding(std::string_view bytes, std::size_t dim) {
  if (dim == 0) fail(Errc::invalid_argument, "mock embedding dimension must be positive");
  std::vector<float> values(dim);
  for (std::size_t c = 0; c < dim; ++c) {
    const auto digest = Sha256().update(bytes).update(u64_le_bytes(c)).finish();
    const std::uint64_t x = le_u64(digest.data());
    const double unit = static_cast<double>(x >> 11) * 0x1.0p-53;
    values[c] = static_cast<float>(2.0 * unit - 1.0);
  }
  return EmbeddingVector(std::move(values));
}

std::optional<std::size_t> find_class_tag(std::string_view text, bool prefix_only) {
  constexpr std::string_view kTag = "class";
  std::size_t pos = 0;
  while ((pos = text.find(kTag, pos)) != std::string_view::npos) {
    if (prefix_only && pos != 0) return std::nullopt;
    std::size_t i = pos + kTag.size();
    std::size_t value = 0;
    std::size_t digits = 0;
    while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i])) && digits < 9) {
      value = value * 10 + static_cast<std::size_t>(text[i] - '0');
      ++i;
      ++digits;
    }
    if (digits > 0 && i < text.size() && text[i] == '_') return value;
    if (prefix_only) return std::nullopt;
    ++pos;
  }
  return std::nullopt;
}

EmbeddingVector mock_clustered_embedding(std::size_t class_index, std::string_view jitter_source, std::size_t dim) {
  if (class_index >= dim) {
    fail(Errc::data, "clustered mock: class " + std::to_string(class_index) + " does not fit in dimension " +
                         std::to_string(dim));
  }
  const auto jitter = mock_hash_embedding(jitter_source, dim);
  const double scale = kClusterJitter / std::sqrt(static_cast<double>(dim));
  std::vector<float> values(dim);
  for (std::size_t c = 0; c < dim; ++c) {
    values[c] = static_cast<float>((c == class_index ? 1.0 : 0.0) + scale * jitter.values()[c]);
  }
  return EmbeddingVector(std::move(values));
}

std::optional<std::string> echo_label_answer(std::string_view text) {
  constexpr std::string_view kListOpen = "list: [";
  constexpr std::string_view kAnswer = "Answer: ";
  constexpr std::string_view kNextImage = ". Image ";
  const auto open = text.find(kListOpen);
  if (open == std::string_view::npos) return std::nullopt;
  if (text.size() < kAnswer.size() || text.substr(text.size() - kAnswer.size()) != kAnswer) return std::nullopt;
  const auto close = text.find("].", open);
  if (close == std::string_view::npos) return std::nullopt;
  const std::string_view list = text.substr(open + kListOpen.size(), close - open - kListOpen.size());

  // Demonstration answers sit between "Answer: " and the following ". Image ".
  std::vector<std::string> answers;
  std::size_t pos = close;
  while ((pos = text.find(kAnswer, pos)) != std::string_view::npos) {
    const std::size_t start = pos + kAnswer.size();
    if (start >= text.size()) break;
    const auto end = text.find(kNextImage, start);
    if (end == std::string_view::npos) break;
    answers.emplace_back(text.substr(start, end - start));
    pos = end;
  }

  if (answers.empty()) {
    const auto comma = list.find(", ");
    return std::string(list.substr(0, comma));
  }
  std::size_t best = 0;
  std::size_t best_count = 0;
  for (std::size_t i = 0; i < answers.size(); ++i) {
    std::size_t count = 0;
    for (const auto& other : answers) count += labels_equal(answers[i], other) ? 1 : 0;
    if (count > best_count) {
      best = i;
      best_count = count;
    }
  }
  return answers[best];
}

MockTokenization tokenize_for_trace(const Prompt& prompt, std::size_t image_tokens) {
  MockTokenization out;
  std::vector<bool> is_image;
  for (const auto& part : prompt.parts) {
    if (const auto* t = std::get_if<TextPart>(&part)) {
      std::size_t i = 0;
      const std::string& s = t->text;
      while (i < s.size()) {
        while (i < s.size() && is_space(s[i])) ++i;
        const std::size_t start = i;
        while (i < s.size() && !is_space(s[i])) ++i;
        if (i > start) {
          out.tokens.emplace_back(s.substr(start, i - start));
          is_image.push_back(false);
        }
      }
    } else {
      out.image_span = {out.tokens.size(), out.tokens.size() + image_tokens};
      for (std::size_t k = 0; k < image_tokens; ++k) {
        out.tokens.emplace_back("<img>");
        is_image.push_back(true);
      }
    }
  }
  if (out.tokens.empty()) return out;
  const std::size_t target = out.tokens.size() - 1;
  for (std::size_t i = 0; i + 1 < target; ++i) {
    if (out.tokens[i] == "Answer:" && !is_image[i + 1]) out.label_positions.push_back(i + 1);
  }
  if (out.image_span.second > target) out.image_span.second = target;
  if (out.image_span.first > out.image_span.second) out.image_span.first = out.image_span.second;
  return out;
}

// ---------------------------------------------------------------------------

MockClient::MockClient(MockOptions options) : options_(std::move(options)) {
  if (options_.dim == 0) fail(Errc::invalid_argument, "mock embedding dimension must be positive");
  if (options_.max_in_flight == 0) fail(Errc::invalid_argument, "max_in_flight must be positive");
}

EmbeddingVector MockClient::embed_image(std::string_view image_bytes) const {
  if (image_bytes.empty()) fail(Errc::invalid_argument, "embed_image: empty image");
  if (options_.modes.clustered) {
    if (auto k = find_class_tag(image_bytes, /*prefix_only=*/true)) {
      return mock_clustered_embedding(*k, image_bytes, options_.dim);
    }
  }
  return mock_hash_embedding(image_bytes, options_.dim);
}

EmbeddingVector MockClient::embed_text(std::string_view text) const {
  if (options_.modes.clustered) {
    if (auto k = find_class_tag(text, /*prefix_only=*/false)) return mock_clustered_embedding(*k, text, options_.dim);
  }
  return mock_hash_embedding(text, options_.dim);
}

std::string MockClient::generate(const Prompt& prompt) const {
  if (prompt.empty()) fail(Errc::invalid_argument, "generate: empty prompt");
  const std::string prompt_hash = prompt.sha256_hex();
  if (options_.modes.scripted) {
    if (auto it = options_.script.generate.find(prompt_hash); it != options_.script.generate.end()) {
      return it->second;
    }
    if (options_.script.generate_default) return *options_.script.generate_default;
  }
  const std::string text = prompt.text();
  if (options_.modes.echo_label) {
    if (auto answer = echo_label_answer(text)) return *answer;
  }
  // Echo: a deterministic function of the (first) image hash and the prompt text.
  std::string out = "A picture";
  const ImagePart* image = first_image(prompt);
  if (image && options_.modes.clustered) {
    if (auto k = find_class_tag(image->image.bytes(), true)) out += " tagged class" + std::to_string(*k) + "_";
  }
  out += " (";
  if (image) out += "image " + image->image.sha256_hex().substr(0, 16) + ", ";
  out += "prompt " + sha256_hex(text).substr(0, 16) + ").";
  return out;
}

double MockClient::score_image_text(std::string_view image_bytes, std::string_view text) const {
  if (image_bytes.empty() || text.empty()) fail(Errc::invalid_argument, "score: image and text must be non-empty");
  if (options_.modes.scripted) {
    const auto key = MockScript::score_key(image_bytes, text);
    if (auto it = options_.script.score.find(key); it != options_.script.score.end()) return it->second;
    if (options_.script.score_default) return *options_.script.score_default;
  }
  const auto a = embed_image(image_bytes);
  const auto b = embed_text(text);
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    const double x = a.values()[i];
    const double y = b.values()[i];
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

TraceBundle MockClient::fetch_trace(const Prompt& prompt, std::string_view target_answer) const {
  if (!options_.trace_enabled) fail(Errc::unsupported, "unsupported: trace export is disabled");
  const auto tok = tokenize_for_trace(prompt, options_.image_tokens);
  if (tok.tokens.empty()) fail(Errc::invalid_argument, "fetch_trace: prompt has no tokens");
  const auto digest = Sha256()
                          .update(prompt.sha256_hex())
                          .update_byte(0)
                          .update(target_answer)
                          .update_byte(0)
                          .update(options_.model_id)
                          .finish();
  return make_synthetic_trace(le_u64(digest.data()), options_.trace_layers, options_.trace_heads, tok.tokens.size(),
                              tok.label_positions, tok.tokens.size() - 1, tok.image_span);
}

}  // namespace vicl
