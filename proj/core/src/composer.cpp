#include "vicl/composer.hpp"

#include <algorithm>

#include "vicl/detail/assets.hpp"
#include "vicl/error.hpp"
#include "vicl/prompt_template.hpp"

namespace vicl {

namespace {

struct Templates {
  PromptTemplate emotion{assets::kInstructionEmotion};
  PromptTemplate object{assets::kInstructionObject};
  PromptTemplate zero_shot{assets::kZeroShotForm};
  PromptTemplate form{assets::kDemonstrationForm};
  PromptTemplate item{assets::kDemonstrationItem};
};

const Templates& templates() {
  static const Templates t;
  return t;
}

Prompt instruction(const LabelSet& labels) {
  const auto& t = labels.kind() == DatasetKind::Emotion ? templates().emotion : templates().object;
  return t.render({{"Label List", text_fragment(labels.joined())}});
}

}  // namespace

ComposedDemonstration compose_text_demonstration(const DemonstrationCandidate& demo, const Summary& summary) {
  if (summary.text.empty()) fail(Errc::invalid_argument, "summary for '" + demo.id + "' is empty");
  return {summary.text, demo.question, demo.answer, demo.id};
}

ComposedDemonstration compose_image_demonstration(const DemonstrationCandidate& demo) {
  return {demo.image, demo.question, demo.answer, demo.id};
}

std::string_view instruction_template(DatasetKind kind) noexcept {
  return kind == DatasetKind::Emotion ? assets::kInstructionEmotion : assets::kInstructionObject;
}
std::string_view zero_shot_template() noexcept { return assets::kZeroShotForm; }
std::string_view demonstration_form_template() noexcept { return assets::kDemonstrationForm; }
std::string_view demonstration_item_template() noexcept { return assets::kDemonstrationItem; }

Prompt render_prompt(PromptMode mode, const LabelSet& labels, std::span<const ComposedDemonstration> demos,
                     const ImageRef& query_image) {
  if (labels.empty()) fail(Errc::invalid_argument, "render_prompt: label set is empty");
  if (mode == PromptMode::ZeroShot) {
    if (!demos.empty()) fail(Errc::invalid_argument, "zero-shot prompts take no demonstrations");
    return templates().zero_shot.render({{"instruction", instruction(labels)}, {"image", image_fragment(query_image)}});
  }

  Prompt body;
  const auto& item = templates().item;
  for (std::size_t i = 0; i < demos.size(); ++i) {
    const auto& d = demos[i];
    if (d.answer.empty()) fail(Errc::invalid_argument, "demonstration '" + d.source_id + "' has an empty answer");
    Prompt content;
    if (mode == PromptMode::VICL) {
      if (d.has_image()) fail(Errc::invalid_argument, "VICL demonstration '" + d.source_id + "' carries an image");
      content = text_fragment(std::get<std::string>(d.content));
    } else {
      if (!d.has_image()) fail(Errc::invalid_argument, "ICL demonstration '" + d.source_id + "' carries summary text");
      content = image_fragment(std::get<ImageRef>(d.content));
    }
    body.append(item.render({{"i", text_fragment(std::to_string(i + 1))},
                             {"summary-i", std::move(content)},
                             {"label-i", text_fragment(d.answer)}}));
  }
  return templates().form.render({{"instruction", instruction(labels)},
               {"demonstrations", std::move(body)},
               {"N", text_fragment(std::to_string(demos.size() + 1))},
               {"image", image_fragment(query_image)}});
}

std::vector<ComposedDemonstration> order_demonstrations(std::vector<ComposedDemonstration> demos,
                                                        const OrderPolicy& policy) {
  if (policy.kind == OrderPolicy::Kind::RerankDescending) return demos;
  const auto matches = std::count_if(demos.begin(), demos.end(),
                                     [&](const ComposedDemonstration& d) { return d.source_id == policy.positive_id; });
  if (matches != 1) {
    fail(Errc::invalid_argument, "positive placement needs exactly one positive demonstration '" + policy.positive_id +
                                     "', found " + std::to_string(matches));
  }
  auto it = std::find_if(demos.begin(), demos.end(),
                         [&](const ComposedDemonstration& d) { return d.source_id == policy.positive_id; });
  ComposedDemonstration positive = std::move(*it);
  demos.erase(it);
  std::size_t target = 0;
  switch (policy.section) {
    case Section::Head: target = 0; break;
    case Section::Middle: target = demos.size() / 2; break;  // floor((len - 1) / 2) of the full list
    case Section::Tail: target = demos.size(); break;
  }
  demos.insert(demos.begin() + static_cast<std::ptrdiff_t>(target), std::move(positive));
  return demos;
}

std::size_t TokenEstimator::estimate(const Prompt& prompt) const noexcept {
  std::size_t total = 0;
  for (const auto& part : prompt.parts) {
    if (const auto* t = std::get_if<TextPart>(&part)) {
      total += (t->text.size() + 3) / 4;
    } else {
      total += image_tokens;
    }
  }
  return total;
}

std::vector<ComposedDemonstration> fit_to_budget(PromptMode mode, const LabelSet& labels,
                                                 std::vector<ComposedDemonstration> demos,
                                                 const ImageRef& query_image, std::size_t budget_tokens,
                                                 const TokenEstimator& estimator) {
  const std::size_t bare = estimator.estimate(render_prompt(mode, labels, {}, query_image));
  if (bare > budget_tokens) {
    fail(Errc::invalid_argument, "token budget " + std::to_string(budget_tokens) + " is below the template size " +
                                     std::to_string(bare));
  }
  // Rendered size grows with every extra demonstration, so the first prefix
  // that overflows ends the search.
  std::size_t keep = 0;
  while (keep < demos.size()) {
    const auto prefix = std::span<const ComposedDemonstration>(demos).first(keep + 1);
    if (estimator.estimate(render_prompt(mode, labels, prefix, query_image)) > budget_tokens) break;
    ++keep;
  }
  demos.resize(keep);
  return demos;
}

}  // namespace vicl
