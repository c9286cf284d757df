// Acceptance checks. Prints one PASS/FAIL line per criterion; exits non-zero
// if any fails.

#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "support/prompt_fixture.hpp"
#include "support/test_support.hpp"
#include "vicl/conformance.hpp"
#include "vicl/demo_store.hpp"
#include "vicl/error.hpp"
#include "vicl/evaluator.hpp"
#include "vicl/flow_analysis.hpp"
#include "vicl/retrieval.hpp"
#include "vicl/splitmix64.hpp"
#include "vicl/unlearning.hpp"

extern char** environ;

namespace {

using namespace vicl;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    if (!ok && pass) {
      pass = false;
      detail = what;
    }
  }
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<float> random_vector(SplitMix64& rng, std::size_t dim) {
  std::vector<float> v(dim);
  for (auto& x : v) x = static_cast<float>(rng.unit() * 2.0 - 1.0);
  return v;
}

double oracle_cosine(std::span<const float> a, std::span<const float> b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += double(a[i]) * double(b[i]);
    na += double(a[i]) * double(a[i]);
    nb += double(b[i]) * double(b[i]);
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

Outcome retrieval_oracle() {
  Outcome o;
  const auto start = Clock::now();
  const std::size_t ks[] = {1, 5, 10};
  for (std::uint64_t instance = 0; instance < 50; ++instance) {
    SplitMix64 rng(1000 + instance);
    EmbeddingIndex index(16);
    std::vector<std::vector<float>> raw;
    for (std::size_t i = 0; i < 200; ++i) {
      raw.push_back(random_vector(rng, 16));
      index.add("v" + std::to_string(i), EmbeddingVector(raw.back()));
    }
    const auto q = random_vector(rng, 16);
    std::vector<std::size_t> order(raw.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> score(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) score[i] = oracle_cosine(raw[i], q);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return score[a] > score[b]; });
    for (auto k : ks) {
      const auto got = retrieve_top_k(index, EmbeddingVector(q), k);
      std::vector<std::string> got_ids, want_ids;
      for (const auto& r : got) got_ids.push_back(r.id);
      for (std::size_t i = 0; i < k; ++i) want_ids.push_back("v" + std::to_string(order[i]));
      o.check(got_ids == want_ids, "instance " + std::to_string(instance) + " k=" + std::to_string(k));
    }
  }
  const double t = seconds_since(start);
  o.check(t < 1.0, "took " + std::to_string(t) + " s");
  if (o.pass) o.detail = "50 instances x k in {1,5,10}, " + std::to_string(t) + " s";
  return o;
}

Outcome cosine_properties() {
  Outcome o;
  SplitMix64 rng(7);
  double worst = 0.0;
  for (int n = 0; n < 10000; ++n) {
    const std::size_t dim = 1 + rng.below(64);
    const auto a = random_vector(rng, dim);
    const auto b = random_vector(rng, dim);
    const float c = static_cast<float>(0.01 + rng.unit() * 100.0);
    auto scaled = a;
    for (auto& x : scaled) x *= c;
    const double ab = cosine_similarity(a, b);
    worst = std::max({worst, std::abs(ab - cosine_similarity(b, a)), std::abs(ab - cosine_similarity(scaled, b))});
  }
  std::ostringstream dev;
  dev << std::scientific << std::setprecision(2) << worst;
  o.check(worst <= 1e-6, "max deviation " + dev.str());
  if (o.pass) o.detail = "10000 pairs, max deviation " + dev.str();
  return o;
}

Outcome saliency_oracle() {
  Outcome o;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto b = make_synthetic_trace(seed, 3, 2, 12, {2, 5}, 11, {7, 10});
    const auto sets = build_index_sets(b.label_positions, b.target_position, b.image_span, b.seq_len);
    const auto report = analyze_trace(b);
    for (std::size_t l = 0; l < b.num_layers; ++l) {
      std::vector<double> sal(b.seq_len * b.seq_len, 0.0);
      for (std::size_t h = 0; h < b.num_heads; ++h) {
        for (std::size_t i = 0; i < b.seq_len; ++i) {
          for (std::size_t j = 0; j < b.seq_len; ++j) {
            sal[i * b.seq_len + j] += std::abs(b.attention_at(l, h, i, j) * b.grad_at(l, h, i, j));
          }
        }
      }
      const auto got = saliency_matrix(b, l);
      for (std::size_t c = 0; c < sal.size(); ++c) {
        o.check(std::abs(got.values[c] - sal[c]) <= 1e-9 * std::max(1e-300, std::abs(sal[c])),
                "saliency seed " + std::to_string(seed));
      }
      auto mean = [&](const std::vector<Cell>& cells) {
        if (cells.empty()) return 0.0;
        double s = 0.0;
        for (const auto& [i, j] : cells) s += sal[i * b.seq_len + j];
        return s / double(cells.size());
      };
      const auto& f = report.layers[l];
      const std::pair<double, double> pairs[] = {
          {f.s_wp, mean(sets.wp)}, {f.s_pq, mean(sets.pq)}, {f.s_vq, mean(sets.vq)}, {f.s_ww, mean(sets.ww)}};
      for (const auto& [g, w] : pairs) {
        o.check(std::abs(g - w) <= 1e-9 * std::abs(w), "flow score seed " + std::to_string(seed));
      }
      double lower = 0.0;
      for (std::size_t i = 0; i < b.seq_len; ++i) {
        for (std::size_t j = 0; j < i; ++j) lower += sal[i * b.seq_len + j];
      }
      const double parts = f.s_wp * f.n_wp + f.s_pq * f.n_pq + f.s_vq * f.n_vq + f.s_ww * f.n_ww;
      o.check(std::abs(parts - lower) <= 1e-9 * lower, "partition seed " + std::to_string(seed));
    }
  }
  if (o.pass) o.detail = "20 bundles, L=3 H=2 S=12";
  return o;
}

Outcome index_sets() {
  Outcome o;
  const auto sets = build_index_sets(std::vector<std::size_t>{2, 4}, 5, {1, 2}, 6);
  o.check(sets.wp.size() == 6 && sets.pq.size() == 2 && sets.vq.size() == 1 && sets.ww.size() == 6,
          "sizes (" + std::to_string(sets.wp.size()) + "," + std::to_string(sets.pq.size()) + "," +
              std::to_string(sets.vq.size()) + "," + std::to_string(sets.ww.size()) + ")");
  std::set<Cell> seen;
  for (const auto* s : {&sets.wp, &sets.pq, &sets.vq, &sets.ww}) {
    for (const auto& c : *s) o.check(c.second < c.first && seen.insert(c).second, "not a partition");
  }
  o.check(seen.size() == 15, "covers " + std::to_string(seen.size()) + " cells");
  if (o.pass) o.detail = "(6, 2, 1, 6) over 15 cells";
  return o;
}

Outcome template_fidelity() {
  Outcome o;
  for (auto kind : {DatasetKind::Emotion, DatasetKind::Object}) {
    for (auto mode : {PromptMode::ZeroShot, PromptMode::ICL, PromptMode::VICL}) {
      const auto f = testing::fixture(kind);
      const auto demos =
          mode == PromptMode::ZeroShot ? std::vector<ComposedDemonstration>{} : testing::composed(f, mode);
      std::string mode_name(to_string(mode));
      std::replace(mode_name.begin(), mode_name.end(), '-', '_');
      const auto name = "prompt_" + std::string(to_string(kind)) + "_" + mode_name + ".txt";
      const auto prompt = render_prompt(mode, f.labels, demos, f.query);
      o.check(prompt.display() == testing::read_file(testing::golden_dir() / name), name);
    }
  }
  if (o.pass) o.detail = "6 golden prompts";
  return o;
}

Outcome end_to_end() {
  Outcome o;
  const auto start = Clock::now();
  testing::TempDir dir;
  auto config = testing::mock_run_config(testing::write_synthetic_dataset(dir.path()));
  auto ws = Workspace::prepare(config, ClientSet::from_config(config));
  o.check(ws.candidates.size() == 30 && ws.tests.size() == 90, "unexpected split sizes");
  const auto run = run_evaluation(config, ws);
  o.check(run.accuracy == 1.0, "VICL accuracy " + std::to_string(run.accuracy));
  const auto rows = run_sweep(config, ws, SweepAxis::DemoCount, {1, 2, 3, 4});
  std::string curve;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    curve += (i ? "," : "") + std::to_string(rows[i].accuracy).substr(0, 5);
    if (i > 0) o.check(rows[i].accuracy >= rows[i - 1].accuracy, "sweep decreases at " + rows[i].setting);
  }
  const double t = seconds_since(start);
  o.check(t < 10.0, "took " + std::to_string(t) + " s");
  if (o.pass) o.detail = "accuracy 1.000, sweep [" + curve + "], " + std::to_string(t).substr(0, 5) + " s";
  return o;
}

Outcome unlearning() {
  Outcome o;
  testing::TempDir dir;
  auto config = testing::mock_run_config(testing::write_synthetic_dataset(dir.path()));
  config.seed = 42;
  auto ws = Workspace::prepare(config, ClientSet::from_config(config));
  const auto sets = build_unlearning_sets(ws.candidates, ws.tests, ws.labels, 42);
  const auto again = build_unlearning_sets(ws.candidates, ws.tests, ws.labels, 42);
  o.check(sets.spec.sublabels.size() == 5, "selected " + std::to_string(sets.spec.sublabels.size()));
  for (const auto& s : sets.spec.sublabels) o.check(sets.spec.original.at(s) != sets.spec.relabel.at(s), "identity");
  o.check(unlearning_sets_json(sets).dump() == unlearning_sets_json(again).dump(), "rerun differs");
  const auto result = run_unlearning(config, ws, sets);
  std::map<std::string, std::string> label_of;
  for (const auto& d : sets.demo_pool) label_of[d.id] = d.answer;
  for (const auto& rec : result.unlearning.records) {
    o.check(std::any_of(rec.demo_ids.begin(), rec.demo_ids.end(), [&](const auto& id) { return label_of[id] == rec.gold; }),
            "no reassigned-class demo for " + rec.query_id);
  }
  if (o.pass) {
    o.detail = "5 sub-classes, " + std::to_string(result.unlearning.records.size()) + " unlearning queries";
  }
  return o;
}

Outcome index_round_trip() {
  Outcome o;
  testing::TempDir dir;
  SplitMix64 rng(99);
  for (int n = 0; n < 100; ++n) {
    const std::size_t dim = 1 + rng.below(32);
    EmbeddingIndex index(dim);
    const std::size_t count = 1 + rng.below(50);
    for (std::size_t i = 0; i < count; ++i) {
      index.add("id-" + std::to_string(n) + "-" + std::to_string(i), EmbeddingVector(random_vector(rng, dim)));
    }
    write_index(index, dir / "i.bin");
    o.check(read_index(dir / "i.bin") == index, "round trip " + std::to_string(n));
    o.check(encode_index(read_index(dir / "i.bin")) == testing::read_file(dir / "i.bin"), "bytes " + std::to_string(n));
  }
  const std::pair<const char*, Errc> damaged[] = {
      {"index_nan.bin", Errc::data}, {"index_truncated.bin", Errc::truncated}, {"index_bad_magic.bin", Errc::bad_magic}};
  for (const auto& [name, code] : damaged) {
    try {
      read_index(testing::fixtures_dir() / name);
      o.check(false, std::string(name) + " accepted");
    } catch (const Error& e) {
      o.check(e.code() == code, std::string(name) + " rejected with the wrong code");
    }
  }
  if (o.pass) o.detail = "100 indices, 3 damaged fixtures rejected";
  return o;
}

Outcome protocol_conformance() {
  Outcome o;
  testing::TempDir dir;
  const auto port_file = (dir / "port").string();
  std::vector<std::string> args{VICL_BINARY, "mock-serve", "--port", "0", "--port-file", port_file};
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);
  pid_t pid = 0;
  if (posix_spawn(&pid, VICL_BINARY, nullptr, nullptr, argv.data(), environ) != 0) {
    o.check(false, "cannot start mock-serve");
    return o;
  }
  std::string port;
  for (int i = 0; i < 200 && port.empty(); ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(25));
    if (std::filesystem::exists(port_file)) port = testing::read_file(port_file);
  }
  while (!port.empty() && std::isspace(static_cast<unsigned char>(port.back()))) port.pop_back();
  if (port.empty()) {
    o.check(false, "mock-serve did not report a port");
  } else {
    const auto checks = run_conformance("http://127.0.0.1:" + port);
    for (const auto& c : checks) o.check(c.passed, c.name + ": " + c.detail);
    if (o.pass) o.detail = std::to_string(checks.size()) + " checks over HTTP";
  }
  kill(pid, SIGTERM);
  int status = 0;
  waitpid(pid, &status, 0);
  return o;
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"retrieval-oracle", retrieval_oracle},
      {"cosine-properties", cosine_properties},
      {"saliency-oracle", saliency_oracle},
      {"index-sets", index_sets},
      {"template-fidelity", template_fidelity},
      {"end-to-end-mock", end_to_end},
      {"unlearning-construction", unlearning},
      {"index-round-trip", index_round_trip},
      {"protocol-conformance", protocol_conformance},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
    failed += o.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
