#include "vicl/prompt_template.hpp"

#include <algorithm>
#include <cctype>

#include "vicl/error.hpp"

namespace vicl {

namespace {

bool slot_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == ' ' || c == '-' || c == '_';
}

}  // namespace

PromptTemplate::PromptTemplate(std::string_view source) {
  std::string literal;
  std::size_t i = 0;
  while (i < source.size()) {
    if (source[i] == '{') {
      const auto close = source.find('}', i + 1);
      if (close != std::string_view::npos && close > i + 1) {
        const auto name = source.substr(i + 1, close - i - 1);
        if (std::all_of(name.begin(), name.end(), slot_char)) {
          if (!literal.empty()) segments_.push_back({false, std::move(literal)});
          literal.clear();
          segments_.push_back({true, std::string(name)});
          placeholders_.emplace_back(name);
          i = close + 1;
          continue;
        }
      }
    }
    literal.push_back(source[i]);
    ++i;
  }
  if (!literal.empty()) segments_.push_back({false, std::move(literal)});
}

Prompt PromptTemplate::render(const std::map<std::string, Prompt, std::less<>>& bindings) const {
  Prompt out;
  for (const auto& seg : segments_) {
    if (!seg.is_slot) {
      out.append_text(seg.text);
      continue;
    }
    auto it = bindings.find(seg.text);
    if (it == bindings.end()) fail(Errc::invalid_argument, "template placeholder {" + seg.text + "} is unbound");
    out.append(it->second);
  }
  return out;
}

Prompt text_fragment(std::string_view text) {
  Prompt p;
  p.append_text(text);
  return p;
}

Prompt image_fragment(const ImageRef& image) {
  Prompt p;
  p.append_image(image);
  return p;
}

}  // namespace vicl
