#include "vicl/unlearning.hpp"

#include <algorithm>
#include <set>

#include <nlohmann/json.hpp>

#include "vicl/error.hpp"
#include "vicl/splitmix64.hpp"

namespace vicl {

namespace {

std::vector<DemonstrationCandidate> relabeled(const std::vector<DemonstrationCandidate>& items,
                                              const UnlearningSpec& spec) {
  std::vector<DemonstrationCandidate> out = items;
  for (auto& d : out) {
    if (!d.sublabel) continue;
    if (auto it = spec.relabel.find(*d.sublabel); it != spec.relabel.end()) d.answer = it->second;
  }
  return out;
}

bool affected(const DemonstrationCandidate& d, const UnlearningSpec& spec) {
  return d.sublabel && spec.relabel.count(*d.sublabel) > 0;
}

}  // namespace

UnlearningSets build_unlearning_sets(const std::vector<DemonstrationCandidate>& candidates,
                                     const std::vector<DemonstrationCandidate>& tests, const LabelSet& labels,
                                     std::uint64_t seed) {
  if (labels.size() < 2) fail(Errc::data, "relabeling needs at least two labels");
  std::vector<std::string> sublabels;
  std::map<std::string, std::string> owner;
  for (const auto* group : {&candidates, &tests}) {
    for (const auto& d : *group) {
      if (!d.sublabel) continue;
      auto [it, inserted] = owner.emplace(*d.sublabel, d.answer);
      if (inserted) {
        sublabels.push_back(*d.sublabel);
      } else if (!labels_equal(it->second, d.answer)) {
        fail(Errc::data, "sub-class '" + *d.sublabel + "' appears under labels '" + it->second + "' and '" +
                             d.answer + "'");
      }
    }
  }
  if (sublabels.size() < kUnlearningSubclasses) {
    fail(Errc::data, "relabeling needs at least " + std::to_string(kUnlearningSubclasses) + " sub-classes, found " +
                         std::to_string(sublabels.size()));
  }

  UnlearningSets sets;
  sets.spec.seed = seed;
  SplitMix64 rng(seed);
  rng.shuffle(sublabels);
  sublabels.resize(kUnlearningSubclasses);
  for (const auto& s : sublabels) {
    const auto& label = owner.at(s);
    const auto idx = labels.index_of(label);
    if (!idx) fail(Errc::data, "sub-class '" + s + "' has label '" + label + "' outside the label set");
    sets.spec.original[s] = labels.labels()[*idx];
    sets.spec.relabel[s] = labels.labels()[(*idx + 1) % labels.size()];
  }
  sets.spec.sublabels = sublabels;

  sets.demo_pool = relabeled(candidates, sets.spec);
  sets.all_set = relabeled(tests, sets.spec);
  for (const auto& t : sets.all_set) {
    if (affected(t, sets.spec)) sets.unlearning_set.push_back(t);
  }

  for (const auto& q : sets.unlearning_set) {
    std::vector<const DemonstrationCandidate*> options;
    for (const auto& d : sets.demo_pool) {
      if (d.sublabel == q.sublabel) options.push_back(&d);
    }
    if (options.empty()) {
      for (const auto& d : sets.demo_pool) {
        if (labels_equal(d.answer, q.answer)) options.push_back(&d);
      }
    }
    if (options.empty()) fail(Errc::data, "no demonstration carries the new label of '" + q.id + "'");
    sets.forced_demo[q.id] = options[rng.below(options.size())]->id;
  }
  return sets;
}

UnlearningResult run_unlearning(const RunConfig& config, const Workspace& workspace, const UnlearningSets& sets,
                                RecordSink* unlearning_sink, RecordSink* all_sink) {
  if (config.mode == PromptMode::ZeroShot) fail(Errc::invalid_argument, "relabeling needs demonstrations");
  Workspace ws = workspace;
  ws.candidates = sets.demo_pool;
  ws.tests = sets.all_set;
  ws.summaries.clear();  // answers changed, and label-aware summaries with them

  // Demonstrations for the unlearning set come from unaffected categories
  // apart from the forced one.
  Workspace standard = ws;
  standard.candidates.clear();
  for (const auto& d : ws.candidates) {
    if (!affected(d, sets.spec)) standard.candidates.push_back(d);
  }
  std::set<std::string, std::less<>> keep;
  for (const auto& d : standard.candidates) keep.insert(d.id);
  standard.index = ws.index.filtered([&](std::string_view id) { return keep.count(id) > 0; });

  RunConfig inner = config;
  inner.demo_count = config.demo_count - 1;
  inner.order = OrderPolicy::rerank_descending();

  auto select_unlearning = [&](const DemonstrationCandidate& q) {
    auto it = sets.forced_demo.find(q.id);
    if (it == sets.forced_demo.end()) fail(Errc::data, "no forced demonstration for '" + q.id + "'");
    std::vector<DemonstrationCandidate> out{ws.candidate(it->second)};
    if (inner.demo_count > 0) {
      for (auto& d : default_demonstrations(inner, standard, q)) out.push_back(std::move(d));
    }
    return out;
  };

  RunConfig plain = config;
  plain.order = OrderPolicy::rerank_descending();
  UnlearningResult result;
  result.unlearning = run_evaluation(plain, ws, sets.unlearning_set, select_unlearning, unlearning_sink);
  result.all = run_evaluation(
      plain, ws, sets.all_set, [&](const DemonstrationCandidate& q) { return default_demonstrations(plain, ws, q); },
      all_sink);
  return result;
}

void to_json(nlohmann::json& j, const UnlearningSpec& v) {
  nlohmann::json subs = nlohmann::json::array();
  for (const auto& s : v.sublabels) {
    subs.push_back({{"sublabel", s}, {"original_label", v.original.at(s)}, {"new_label", v.relabel.at(s)}});
  }
  j = nlohmann::json{{"seed", v.seed}, {"sublabels", subs}};
}

nlohmann::json unlearning_sets_json(const UnlearningSets& sets) {
  nlohmann::json unlearning = nlohmann::json::array();
  for (const auto& q : sets.unlearning_set) {
    unlearning.push_back({{"id", q.id},
                          {"sublabel", *q.sublabel},
                          {"label", q.answer},
                          {"forced_demo", sets.forced_demo.at(q.id)}});
  }
  nlohmann::json all = nlohmann::json::array();
  for (const auto& q : sets.all_set) all.push_back({{"id", q.id}, {"label", q.answer}});
  return nlohmann::json{{"spec", sets.spec}, {"unlearning_set", unlearning}, {"all_set", all}};
}

}  // namespace vicl
