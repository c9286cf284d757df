#pragma once

// Intent-oriented image summarization: strategy prompts, summary prompts and
// cached summary generation for demonstration candidates.

#include <span>
#include <string_view>
#include <vector>

#include "vicl/demo_store.hpp"
#include "vicl/inference_client.hpp"
#include "vicl/types.hpp"

namespace vicl {

/// The fixed instruction text for a summarization strategy.
std::string_view strategy_prompt(SummaryStrategy strategy) noexcept;

/// [Text(strategy prompt), Image(demo image), Text("Label: <answer>")]; the
/// label part is omitted for Standard captioning.
Prompt build_summary_prompt(SummaryStrategy strategy, const DemonstrationCandidate& demo);

Summary summarize_demonstration(const DemonstrationCandidate& demo, SummaryStrategy strategy,
                                const InferenceClient& client, GenerationCache& cache);

/// Summaries for every demo, in input order.
std::vector<Summary> summarize_pool(std::span<const DemonstrationCandidate> demos, SummaryStrategy strategy,
                                    const InferenceClient& client, GenerationCache& cache);

}  // namespace vicl
