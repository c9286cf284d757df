#pragma once

// Demonstration composition: Zero-Shot / ICL / VICL prompt rendering from the
// task templates, demonstration ordering and token budgeting.

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "vicl/types.hpp"

namespace vicl {

/// One demonstration ready for a prompt. VICL demonstrations carry summary
/// text; ICL demonstrations carry the demonstration image.
struct ComposedDemonstration {
  std::variant<std::string, ImageRef> content;
  std::string question;
  std::string answer;
  std::string source_id;

  bool has_image() const noexcept { return std::holds_alternative<ImageRef>(content); }

  friend bool operator==(const ComposedDemonstration&, const ComposedDemonstration&) = default;
};

ComposedDemonstration compose_text_demonstration(const DemonstrationCandidate& demo, const Summary& summary);
ComposedDemonstration compose_image_demonstration(const DemonstrationCandidate& demo);

/// Fixed template text, byte-exact.
std::string_view instruction_template(DatasetKind kind) noexcept;
std::string_view zero_shot_template() noexcept;
std::string_view demonstration_form_template() noexcept;
std::string_view demonstration_item_template() noexcept;

/// Renders the task prompt. Demonstrations are numbered "Image 1:", "Image 2:",
/// ... and the query closes the prompt as "Image N: <image>. Answer: ".
Prompt render_prompt(PromptMode mode, const LabelSet& labels, std::span<const ComposedDemonstration> demos,
                     const ImageRef& query_image);

/// RerankDescending keeps the input order. PositiveAt moves the single demo
/// whose source_id equals policy.positive_id to index 0 (Head), the last index
/// (Tail) or floor((len - 1) / 2) (Middle); the others keep their order.
std::vector<ComposedDemonstration> order_demonstrations(std::vector<ComposedDemonstration> demos,
                                                        const OrderPolicy& policy);

/// ceil(UTF-8 bytes / 4) per text part plus a fixed cost per image part.
struct TokenEstimator {
  std::size_t image_tokens = 256;

  std::size_t estimate(const Prompt& prompt) const noexcept;
};

/// Longest prefix of `demos` whose rendered prompt fits in `budget_tokens`.
/// Throws Error(Errc::invalid_argument) when even the bare template does not fit.
std::vector<ComposedDemonstration> fit_to_budget(PromptMode mode, const LabelSet& labels,
                                                 std::vector<ComposedDemonstration> demos,
                                                 const ImageRef& query_image, std::size_t budget_tokens,
                                                 const TokenEstimator& estimator = {});

}  // namespace vicl
