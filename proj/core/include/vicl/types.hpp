#pragma once

// Domain types shared by every module. No I/O beyond lazily reading image
// files, no model calls.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "vicl/hashing.hpp"

namespace vicl {

/// Fixed-dimension float32 embedding. Values are always finite.
class EmbeddingVector {
 public:
  EmbeddingVector() = default;
  /// Throws Error(Errc::data) when empty or any value is NaN/Inf.
  explicit EmbeddingVector(std::vector<float> values);

  std::size_t dim() const noexcept { return values_.size(); }
  std::span<const float> values() const noexcept { return values_; }
  bool empty() const noexcept { return values_.empty(); }

  /// Bitwise comparison of the stored floats.
  friend bool operator==(const EmbeddingVector& a, const EmbeddingVector& b) noexcept;

 private:
  std::vector<float> values_;
};

/// Opaque image source: a file on disk or inline bytes. Identity for caching
/// purposes is always the SHA-256 of the bytes, never the path.
class ImageRef {
 public:
  ImageRef() = default;
  static ImageRef from_path(std::filesystem::path path);
  static ImageRef from_bytes(std::string bytes);

  bool is_path() const noexcept;
  const std::filesystem::path& path() const;

  /// Loads the file on first use. Throws Error(Errc::data) if unreadable.
  const std::string& bytes() const;
  const std::string& sha256_hex() const;

  friend bool operator==(const ImageRef& a, const ImageRef& b);

 private:
  struct State;
  std::shared_ptr<State> state_;
};

struct DemonstrationCandidate {
  std::string id;
  ImageRef image;
  std::string question;
  std::string answer;
  std::optional<std::string> sublabel;

  friend bool operator==(const DemonstrationCandidate&, const DemonstrationCandidate&) = default;
};

enum class SummaryStrategy { Standard, TaskIntent, ImageParsing, IOIS };

std::string_view to_string(SummaryStrategy strategy) noexcept;
SummaryStrategy parse_summary_strategy(std::string_view text);

struct Summary {
  std::string text;
  SummaryStrategy strategy = SummaryStrategy::IOIS;
  std::string source_candidate;
  std::string model_id;

  friend bool operator==(const Summary&, const Summary&) = default;
};

struct TextPart {
  std::string text;
  friend bool operator==(const TextPart&, const TextPart&) = default;
};

struct ImagePart {
  ImageRef image;
  friend bool operator==(const ImagePart&, const ImagePart&) = default;
};

using PromptPart = std::variant<TextPart, ImagePart>;

/// Ordered sequence of text and image parts forming one model input.
struct Prompt {
  std::vector<PromptPart> parts;

  /// Appends text, merging with a trailing text part.
  void append_text(std::string_view text);
  void append_image(ImageRef image);
  void append(const Prompt& other);

  std::size_t image_count() const noexcept;
  bool empty() const noexcept { return parts.empty(); }

  /// Text parts concatenated in order; images contribute nothing.
  std::string text() const;
  /// Human-readable rendering with each image shown as <image sha256=XXXXXXXXXXXX>.
  std::string display() const;
  /// Content hash over a length-prefixed encoding of the parts, with images
  /// represented by the SHA-256 of their bytes.
  std::string sha256_hex() const;

  friend bool operator==(const Prompt&, const Prompt&) = default;
};

enum class DatasetKind { Emotion, Object };

std::string_view to_string(DatasetKind kind) noexcept;
DatasetKind parse_dataset_kind(std::string_view text);
/// The question posed by the task instruction for this kind of dataset.
std::string_view task_question(DatasetKind kind) noexcept;

/// Case-insensitive label utilities. Original casing is preserved for display.
std::string lowercase(std::string_view text);
bool labels_equal(std::string_view a, std::string_view b);

class LabelSet {
 public:
  LabelSet() = default;
  /// Throws Error(Errc::data) on empty or duplicate (case-insensitive) labels.
  LabelSet(std::vector<std::string> labels, DatasetKind kind);

  const std::vector<std::string>& labels() const noexcept { return labels_; }
  DatasetKind kind() const noexcept { return kind_; }
  std::size_t size() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return labels_.empty(); }

  std::optional<std::size_t> index_of(std::string_view label) const;
  bool contains(std::string_view label) const { return index_of(label).has_value(); }
  /// Labels joined with ", ".
  std::string joined() const;

  friend bool operator==(const LabelSet&, const LabelSet&) = default;

 private:
  std::vector<std::string> labels_;
  DatasetKind kind_ = DatasetKind::Emotion;
};

enum class PromptMode { ZeroShot, ICL, VICL };

std::string_view to_string(PromptMode mode) noexcept;
PromptMode parse_prompt_mode(std::string_view text);

enum class Section { Head, Middle, Tail };

std::string_view to_string(Section section) noexcept;
Section parse_section(std::string_view text);

struct OrderPolicy {
  enum class Kind { RerankDescending, PositiveAt };

  Kind kind = Kind::RerankDescending;
  Section section = Section::Head;
  /// Source id of the designated positive demonstration (PositiveAt only).
  std::string positive_id;

  static OrderPolicy rerank_descending() { return {}; }
  static OrderPolicy positive_at(Section section, std::string positive_id = {}) {
    return {Kind::PositiveAt, section, std::move(positive_id)};
  }

  friend bool operator==(const OrderPolicy&, const OrderPolicy&) = default;
};

std::string to_string(const OrderPolicy& policy);
/// Accepts "rerank" or "head" / "middle" / "tail".
OrderPolicy parse_order_policy(std::string_view text);

// JSON (de)serialization, found by nlohmann via ADL.
void to_json(nlohmann::json& j, const EmbeddingVector& v);
void from_json(const nlohmann::json& j, EmbeddingVector& v);
void to_json(nlohmann::json& j, const ImageRef& v);
void from_json(const nlohmann::json& j, ImageRef& v);
void to_json(nlohmann::json& j, const DemonstrationCandidate& v);
void from_json(const nlohmann::json& j, DemonstrationCandidate& v);
void to_json(nlohmann::json& j, const Summary& v);
void from_json(const nlohmann::json& j, Summary& v);
void to_json(nlohmann::json& j, const Prompt& v);
void from_json(const nlohmann::json& j, Prompt& v);
void to_json(nlohmann::json& j, const LabelSet& v);
void from_json(const nlohmann::json& j, LabelSet& v);
void to_json(nlohmann::json& j, const OrderPolicy& v);
void from_json(const nlohmann::json& j, OrderPolicy& v);

}  // namespace vicl
