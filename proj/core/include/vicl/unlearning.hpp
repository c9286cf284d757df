#pragma once

// Demonstration-driven relabeling: pick sub-classes, move them to a new label
// in the demonstrations, and test whether predictions follow the new label.

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "vicl/evaluator.hpp"
#include "vicl/types.hpp"

namespace vicl {

inline constexpr std::size_t kUnlearningSubclasses = 5;

struct UnlearningSpec {
  std::uint64_t seed = 42;
  std::vector<std::string> sublabels;           // affected, in selection order
  std::map<std::string, std::string> original;  // sublabel -> original label
  std::map<std::string, std::string> relabel;   // sublabel -> replacement label
};

struct UnlearningSets {
  UnlearningSpec spec;
  std::vector<DemonstrationCandidate> demo_pool;       // candidates, affected ones relabeled
  std::vector<DemonstrationCandidate> unlearning_set;  // affected tests, relabeled
  std::vector<DemonstrationCandidate> all_set;         // every test, affected ones relabeled
  std::map<std::string, std::string> forced_demo;      // unlearning query id -> demo id
};

/// Collects sub-classes in first-appearance order over candidates then tests,
/// shuffles them with the seed and relabels the first five to the next label
/// in the label set (cyclically). Each affected test gets one forced
/// demonstration of its sub-class, or failing that of its new label.
/// Throws Error(Errc::data) with fewer than five sub-classes, a sub-class
/// spanning several labels, or fewer than two labels.
UnlearningSets build_unlearning_sets(const std::vector<DemonstrationCandidate>& candidates,
                                     const std::vector<DemonstrationCandidate>& tests, const LabelSet& labels,
                                     std::uint64_t seed);

struct UnlearningResult {
  EvalResult unlearning;
  EvalResult all;
};

/// Evaluates the unlearning set (forced demonstration plus n-1 retrieved from
/// unaffected candidates) and the all set (default retrieval over the
/// relabeled pool).
UnlearningResult run_unlearning(const RunConfig& config, const Workspace& workspace, const UnlearningSets& sets,
                                RecordSink* unlearning_sink = nullptr, RecordSink* all_sink = nullptr);

void to_json(nlohmann::json& j, const UnlearningSpec& v);
nlohmann::json unlearning_sets_json(const UnlearningSets& sets);

}  // namespace vicl
