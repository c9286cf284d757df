#pragma once

#include <map>
#include <string>
#include <string_view>

#include "vicl/types.hpp"

namespace vicl {

/// Placeholder substitution over "{name}" slots. Values are prompt fragments,
/// so a slot can expand to text, an image, or a mix. Substituted values are
/// not rescanned, so braces inside them are literal.
class PromptTemplate {
 public:
  explicit PromptTemplate(std::string_view source);

  /// Throws Error(Errc::invalid_argument) naming the first unbound slot.
  Prompt render(const std::map<std::string, Prompt, std::less<>>& bindings) const;

  const std::vector<std::string>& placeholders() const noexcept { return placeholders_; }

 private:
  struct Segment {
    bool is_slot = false;
    std::string text;  // literal text, or slot name
  };
  std::vector<Segment> segments_;
  std::vector<std::string> placeholders_;
};

Prompt text_fragment(std::string_view text);
Prompt image_fragment(const ImageRef& image);

}  // namespace vicl
