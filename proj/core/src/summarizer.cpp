#include "vicl/summarizer.hpp"

#include "vicl/detail/assets.hpp"
#include "vicl/error.hpp"
#include "vicl/parallel.hpp"

namespace vicl {

namespace {

constexpr std::string_view kLabelPrefix = "Label: ";

// Text the cache key covers: every text part, separated by a newline.
std::string prompt_key_text(const Prompt& prompt) {
  std::string out;
  bool first = true;
  for (const auto& part : prompt.parts) {
    if (const auto* t = std::get_if<TextPart>(&part)) {
      if (!first) out += '\n';
      out += t->text;
      first = false;
    }
  }
  return out;
}

}  // namespace

std::string_view strategy_prompt(SummaryStrategy strategy) noexcept {
  switch (strategy) {
    case SummaryStrategy::Standard: return assets::kSummaryStandard;
    case SummaryStrategy::TaskIntent: return assets::kSummaryTaskIntent;
    case SummaryStrategy::ImageParsing: return assets::kSummaryImageParsing;
    case SummaryStrategy::IOIS: return assets::kSummaryIois;
  }
  return assets::kSummaryIois;
}

Prompt build_summary_prompt(SummaryStrategy strategy, const DemonstrationCandidate& demo) {
  if (demo.answer.empty()) fail(Errc::invalid_argument, "demonstration '" + demo.id + "' has no answer");
  Prompt prompt;
  prompt.parts.emplace_back(TextPart{std::string(strategy_prompt(strategy))});
  prompt.parts.emplace_back(ImagePart{demo.image});
  if (strategy != SummaryStrategy::Standard) prompt.parts.emplace_back(TextPart{std::string(kLabelPrefix) + demo.answer});
  return prompt;
}

Summary summarize_demonstration(const DemonstrationCandidate& demo, SummaryStrategy strategy,
                                const InferenceClient& client, GenerationCache& cache) {
  const Prompt prompt = build_summary_prompt(strategy, demo);
  Summary summary;
  summary.strategy = strategy;
  summary.source_candidate = demo.id;
  summary.model_id = client.model_id();
  try {
    summary.text = cache.get_or_generate(demo.image.bytes(), prompt_key_text(prompt), client.model_id(), [&] {
      auto text = client.generate(prompt);
      if (text.empty()) fail(Errc::generation, "empty summary");
      return text;
    });
  } catch (const Error& e) {
    throw Error(e.code(), "summarizing '" + demo.id + "': " + e.what());
  }
  return summary;
}

std::vector<Summary> summarize_pool(std::span<const DemonstrationCandidate> demos, SummaryStrategy strategy,
                                    const InferenceClient& client, GenerationCache& cache) {
  std::vector<Summary> out(demos.size());
  parallel_for(demos.size(), client.max_in_flight(),
               [&](std::size_t i) { out[i] = summarize_demonstration(demos[i], strategy, client, cache); });
  return out;
}

}  // namespace vicl
