#include "vicl/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>
#include <sstream>

#include <nlohmann/json.hpp>

#include "vicl/error.hpp"

namespace vicl {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::data: return "data";
    case Errc::bad_magic: return "bad_magic";
    case Errc::bad_version: return "bad_version";
    case Errc::truncated: return "truncated";
    case Errc::dimension_mismatch: return "dimension_mismatch";
    case Errc::invariant: return "invariant";
    case Errc::generation: return "generation";
    case Errc::transport: return "transport";
    case Errc::permanent: return "permanent";
    case Errc::unsupported: return "unsupported";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// EmbeddingVector

EmbeddingVector::EmbeddingVector(std::vector<float> values) : values_(std::move(values)) {
  if (values_.empty()) fail(Errc::data, "embedding vector has zero dimension");
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      fail(Errc::data, "embedding component " + std::to_string(i) + " is not finite");
    }
  }
}

bool operator==(const EmbeddingVector& a, const EmbeddingVector& b) noexcept {
  return a.values_.size() == b.values_.size() &&
         std::memcmp(a.values_.data(), b.values_.data(), a.values_.size() * sizeof(float)) == 0;
}

// ---------------------------------------------------------------------------
// ImageRef

struct ImageRef::State {
  std::optional<std::filesystem::path> path;
  mutable std::once_flag loaded;
  mutable std::string bytes;
  mutable std::string sha;
  mutable std::optional<Error> load_error;

  void load() const {
    std::call_once(loaded, [this] {
      if (path) {
        std::ifstream in(*path, std::ios::binary);
        if (!in) {
          load_error = Error(Errc::data, "cannot read image file '" + path->string() + "'");
          return;
        }
        std::ostringstream ss;
        ss << in.rdbuf();
        bytes = std::move(ss).str();
      }
      sha = vicl::sha256_hex(bytes);
    });
    if (load_error) throw *load_error;
  }
};

ImageRef ImageRef::from_path(std::filesystem::path path) {
  ImageRef ref;
  ref.state_ = std::make_shared<State>();
  ref.state_->path = std::move(path);
  return ref;
}

ImageRef ImageRef::from_bytes(std::string bytes) {
  ImageRef ref;
  ref.state_ = std::make_shared<State>();
  ref.state_->bytes = std::move(bytes);
  return ref;
}

bool ImageRef::is_path() const noexcept { return state_ && state_->path.has_value(); }

const std::filesystem::path& ImageRef::path() const {
  if (!is_path()) fail(Errc::invalid_argument, "image reference is not file-backed");
  return *state_->path;
}

const std::string& ImageRef::bytes() const {
  if (!state_) fail(Errc::invalid_argument, "empty image reference");
  state_->load();
  return state_->bytes;
}

const std::string& ImageRef::sha256_hex() const {
  if (!state_) fail(Errc::invalid_argument, "empty image reference");
  state_->load();
  return state_->sha;
}

bool operator==(const ImageRef& a, const ImageRef& b) {
  if (a.state_ == b.state_) return true;
  if (!a.state_ || !b.state_) return false;
  if (a.is_path() != b.is_path()) return false;
  if (a.is_path()) return *a.state_->path == *b.state_->path;
  return a.state_->bytes == b.state_->bytes;
}

// ---------------------------------------------------------------------------
// Enums

std::string_view to_string(SummaryStrategy strategy) noexcept {
  switch (strategy) {
    case SummaryStrategy::Standard: return "standard";
    case SummaryStrategy::TaskIntent: return "task-intent";
    case SummaryStrategy::ImageParsing: return "image-parsing";
    case SummaryStrategy::IOIS: return "iois";
  }
  return "iois";
}

SummaryStrategy parse_summary_strategy(std::string_view text) {
  const std::string s = lowercase(text);
  if (s == "standard") return SummaryStrategy::Standard;
  if (s == "task-intent" || s == "taskintent") return SummaryStrategy::TaskIntent;
  if (s == "image-parsing" || s == "imageparsing") return SummaryStrategy::ImageParsing;
  if (s == "iois") return SummaryStrategy::IOIS;
  fail(Errc::invalid_argument, "unknown summary strategy '" + std::string(text) + "'");
}

std::string_view to_string(DatasetKind kind) noexcept {
  return kind == DatasetKind::Emotion ? "emotion" : "object";
}

DatasetKind parse_dataset_kind(std::string_view text) {
  const std::string s = lowercase(text);
  if (s == "emotion") return DatasetKind::Emotion;
  if (s == "object") return DatasetKind::Object;
  fail(Errc::invalid_argument, "unknown dataset kind '" + std::string(text) + "'");
}

std::string_view task_question(DatasetKind kind) noexcept {
  return kind == DatasetKind::Emotion ? "Do you feel which emotion when seeing this image?"
                                      : "What you see in this image?";
}

std::string_view to_string(PromptMode mode) noexcept {
  switch (mode) {
    case PromptMode::ZeroShot: return "zero-shot";
    case PromptMode::ICL: return "icl";
    case PromptMode::VICL: return "vicl";
  }
  return "vicl";
}

PromptMode parse_prompt_mode(std::string_view text) {
  const std::string s = lowercase(text);
  if (s == "zero-shot" || s == "zeroshot" || s == "zero_shot") return PromptMode::ZeroShot;
  if (s == "icl") return PromptMode::ICL;
  if (s == "vicl") return PromptMode::VICL;
  fail(Errc::invalid_argument, "unknown prompt mode '" + std::string(text) + "'");
}

std::string_view to_string(Section section) noexcept {
  switch (section) {
    case Section::Head: return "head";
    case Section::Middle: return "middle";
    case Section::Tail: return "tail";
  }
  return "head";
}

Section parse_section(std::string_view text) {
  const std::string s = lowercase(text);
  if (s == "head") return Section::Head;
  if (s == "middle") return Section::Middle;
  if (s == "tail") return Section::Tail;
  fail(Errc::invalid_argument, "unknown section '" + std::string(text) + "'");
}

std::string to_string(const OrderPolicy& policy) {
  if (policy.kind == OrderPolicy::Kind::RerankDescending) return "rerank";
  return std::string(to_string(policy.section));
}

OrderPolicy parse_order_policy(std::string_view text) {
  const std::string s = lowercase(text);
  if (s == "rerank" || s == "rerank-descending") return OrderPolicy::rerank_descending();
  return OrderPolicy::positive_at(parse_section(s));
}

// ---------------------------------------------------------------------------
// Labels

std::string lowercase(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
    return static_cast<char>(c >= 'A' && c <= 'Z' ? c + ('a' - 'A') : c);
  });
  return out;
}

bool labels_equal(std::string_view a, std::string_view b) { return lowercase(a) == lowercase(b); }

LabelSet::LabelSet(std::vector<std::string> labels, DatasetKind kind)
    : labels_(std::move(labels)), kind_(kind) {
  if (labels_.empty()) fail(Errc::data, "label set is empty");
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i].empty()) fail(Errc::data, "label set contains an empty label");
    for (std::size_t j = 0; j < i; ++j) {
      if (labels_equal(labels_[i], labels_[j])) {
        fail(Errc::data, "duplicate label '" + labels_[i] + "'");
      }
    }
  }
}

std::optional<std::size_t> LabelSet::index_of(std::string_view label) const {
  const std::string needle = lowercase(label);
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (lowercase(labels_[i]) == needle) return i;
  }
  return std::nullopt;
}

std::string LabelSet::joined() const {
  std::string out;
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (i) out += ", ";
    out += labels_[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Prompt

void Prompt::append_text(std::string_view text) {
  if (text.empty()) return;
  if (!parts.empty()) {
    if (auto* last = std::get_if<TextPart>(&parts.back())) {
      last->text += text;
      return;
    }
  }
  parts.emplace_back(TextPart{std::string(text)});
}

void Prompt::append_image(ImageRef image) { parts.emplace_back(ImagePart{std::move(image)}); }

void Prompt::append(const Prompt& other) {
  for (const auto& part : other.parts) {
    if (const auto* t = std::get_if<TextPart>(&part)) {
      append_text(t->text);
    } else {
      parts.push_back(part);
    }
  }
}

std::size_t Prompt::image_count() const noexcept {
  return static_cast<std::size_t>(std::count_if(parts.begin(), parts.end(), [](const PromptPart& p) {
    return std::holds_alternative<ImagePart>(p);
  }));
}

std::string Prompt::text() const {
  std::string out;
  for (const auto& part : parts) {
    if (const auto* t = std::get_if<TextPart>(&part)) out += t->text;
  }
  return out;
}

std::string Prompt::display() const {
  std::string out;
  for (const auto& part : parts) {
    if (const auto* t = std::get_if<TextPart>(&part)) {
      out += t->text;
    } else {
      out += "<image sha256=" + std::get<ImagePart>(part).image.sha256_hex().substr(0, 12) + ">";
    }
  }
  return out;
}

namespace {
void put_u64(Sha256& h, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) h.update_byte(static_cast<std::uint8_t>(v >> (8 * i)));
}
}  // namespace

std::string Prompt::sha256_hex() const {
  Sha256 h;
  put_u64(h, parts.size());
  for (const auto& part : parts) {
    if (const auto* t = std::get_if<TextPart>(&part)) {
      h.update("T");
      put_u64(h, t->text.size());
      h.update(t->text);
    } else {
      h.update("I");
      h.update(std::get<ImagePart>(part).image.sha256_hex());
    }
  }
  return to_hex(h.finish());
}

// ---------------------------------------------------------------------------
// JSON

void to_json(nlohmann::json& j, const EmbeddingVector& v) {
  j = nlohmann::json{{"dim", v.dim()}, {"values", std::vector<float>(v.values().begin(), v.values().end())}};
}

void from_json(const nlohmann::json& j, EmbeddingVector& v) {
  auto values = j.at("values").get<std::vector<float>>();
  if (j.contains("dim") && j.at("dim").get<std::size_t>() != values.size()) {
    fail(Errc::data, "embedding dim field disagrees with value count");
  }
  v = EmbeddingVector(std::move(values));
}

void to_json(nlohmann::json& j, const ImageRef& v) {
  if (v.is_path()) {
    j = nlohmann::json{{"path", v.path().string()}};
  } else {
    j = nlohmann::json{{"bytes_b64", base64_encode(v.bytes())}};
  }
}

void from_json(const nlohmann::json& j, ImageRef& v) {
  if (j.contains("path")) {
    v = ImageRef::from_path(j.at("path").get<std::string>());
  } else {
    v = ImageRef::from_bytes(base64_decode(j.at("bytes_b64").get<std::string>()));
  }
}

void to_json(nlohmann::json& j, const DemonstrationCandidate& v) {
  j = nlohmann::json{{"id", v.id},
                     {"image", v.image},
                     {"question", v.question},
                     {"answer", v.answer},
                     {"sublabel", v.sublabel ? nlohmann::json(*v.sublabel) : nlohmann::json(nullptr)}};
}

void from_json(const nlohmann::json& j, DemonstrationCandidate& v) {
  v.id = j.at("id").get<std::string>();
  v.image = j.at("image").get<ImageRef>();
  v.question = j.at("question").get<std::string>();
  v.answer = j.at("answer").get<std::string>();
  v.sublabel.reset();
  if (j.contains("sublabel") && !j.at("sublabel").is_null()) v.sublabel = j.at("sublabel").get<std::string>();
}

void to_json(nlohmann::json& j, const Summary& v) {
  j = nlohmann::json{{"text", v.text},
                     {"strategy", to_string(v.strategy)},
                     {"source_candidate", v.source_candidate},
                     {"model_id", v.model_id}};
}

void from_json(const nlohmann::json& j, Summary& v) {
  v.text = j.at("text").get<std::string>();
  v.strategy = parse_summary_strategy(j.at("strategy").get<std::string>());
  v.source_candidate = j.at("source_candidate").get<std::string>();
  v.model_id = j.at("model_id").get<std::string>();
}

void to_json(nlohmann::json& j, const Prompt& v) {
  j = nlohmann::json::array();
  for (const auto& part : v.parts) {
    if (const auto* t = std::get_if<TextPart>(&part)) {
      j.push_back({{"type", "text"}, {"text", t->text}});
    } else {
      j.push_back({{"type", "image"}, {"image", std::get<ImagePart>(part).image}});
    }
  }
}

void from_json(const nlohmann::json& j, Prompt& v) {
  v.parts.clear();
  for (const auto& part : j) {
    const auto type = part.at("type").get<std::string>();
    if (type == "text") {
      v.parts.emplace_back(TextPart{part.at("text").get<std::string>()});
    } else if (type == "image") {
      v.parts.emplace_back(ImagePart{part.at("image").get<ImageRef>()});
    } else {
      fail(Errc::data, "unknown prompt part type '" + type + "'");
    }
  }
}

void to_json(nlohmann::json& j, const LabelSet& v) {
  j = nlohmann::json{{"labels", v.labels()}, {"dataset_kind", to_string(v.kind())}};
}

void from_json(const nlohmann::json& j, LabelSet& v) {
  v = LabelSet(j.at("labels").get<std::vector<std::string>>(),
               parse_dataset_kind(j.at("dataset_kind").get<std::string>()));
}

void to_json(nlohmann::json& j, const OrderPolicy& v) {
  j = nlohmann::json{{"policy", to_string(v)}};
  if (v.kind == OrderPolicy::Kind::PositiveAt && !v.positive_id.empty()) j["positive_id"] = v.positive_id;
}

void from_json(const nlohmann::json& j, OrderPolicy& v) {
  v = parse_order_policy(j.at("policy").get<std::string>());
  if (j.contains("positive_id")) v.positive_id = j.at("positive_id").get<std::string>();
}

}  // namespace vicl
