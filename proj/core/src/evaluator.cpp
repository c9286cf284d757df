#include "vicl/evaluator.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "vicl/error.hpp"
#include "vicl/hashing.hpp"
#include "vicl/parallel.hpp"
#include "vicl/splitmix64.hpp"
#include "vicl/summarizer.hpp"

#ifndef VICL_GIT_DESCRIBE
#define VICL_GIT_DESCRIBE "unknown"
#endif

namespace vicl {

using nlohmann::json;

std::string_view to_string(RetrievalMethod method) noexcept {
  return method == RetrievalMethod::Random ? "random" : "similarity";
}

RetrievalMethod parse_retrieval_method(std::string_view text) {
  const auto t = lowercase(text);
  if (t == "similarity") return RetrievalMethod::Similarity;
  if (t == "random") return RetrievalMethod::Random;
  fail(Errc::invalid_argument, "unknown retrieval method '" + std::string(text) + "' (similarity, random)");
}

void RunConfig::validate() const {
  auto bad = [](const std::string& why) { fail(Errc::invalid_argument, why); };
  if (mode != PromptMode::ZeroShot) {
    if (demo_count == 0) bad("demo_count must be at least 1 outside zero-shot mode");
    if (retrieval == RetrievalMethod::Similarity && demo_count > pool_size) {
      bad("demo_count (" + std::to_string(demo_count) + ") exceeds pool_size (" + std::to_string(pool_size) + ")");
    }
  }
  if (budget_tokens == 0) bad("budget_tokens must be positive");
  if (max_candidates == 0) bad("max_candidates must be positive");
  if (max_tests == 0) bad("max_tests must be positive");
  if (max_in_flight == 0) bad("max_in_flight must be positive");
  if (order.kind == OrderPolicy::Kind::PositiveAt && mode == PromptMode::ZeroShot) {
    bad("positive placement needs demonstrations; zero-shot has none");
  }
  embedder.validate();
  scorer.validate();
  generator.validate();
}

namespace {

json client_json(const ClientConfig& c) {
  json j{{"endpoint", c.endpoint},
         {"model_id", c.model_id},
         {"timeout_ms", c.timeout.count()},
         {"max_in_flight", c.max_in_flight},
         {"retries", c.retries}};
  if (!c.script_path.empty()) j["script"] = c.script_path.string();
  if (c.endpoint.rfind("mock:", 0) == 0) j["mock_dim"] = c.mock_dim;
  return j;
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

bool is_recordable(const Error& e) { return e.is_client_error() || e.code() == Errc::generation; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-'; }

bool contains_word(std::string_view text, std::string_view word) {
  if (word.empty()) return false;
  for (std::size_t pos = text.find(word); pos != std::string_view::npos; pos = text.find(word, pos + 1)) {
    const bool left = pos == 0 || !word_char(text[pos - 1]);
    const std::size_t end = pos + word.size();
    const bool right = end == text.size() || !word_char(text[end]);
    if (left && right) return true;
  }
  return false;
}

std::uint64_t id_seed(std::uint64_t seed, std::string_view id) {
  const auto digest = sha256(id);
  std::uint64_t x = 0;
  for (int b = 7; b >= 0; --b) x = (x << 8) | digest[static_cast<std::size_t>(b)];
  return seed ^ x;
}

}  // namespace

void to_json(json& j, const RunConfig& v) {
  j = json{{"mode", to_string(v.mode)},
           {"demo_count", v.demo_count},
           {"pool_size", v.pool_size},
           {"strategy", to_string(v.strategy)},
           {"order", to_string(v.order)},
           {"budget_tokens", v.budget_tokens},
           {"image_tokens", v.image_tokens},
           {"seed", v.seed},
           {"rerank", v.rerank},
           {"retrieval", to_string(v.retrieval)},
           {"max_candidates", v.max_candidates},
           {"max_tests", v.max_tests},
           {"max_in_flight", v.max_in_flight},
           {"dataset_kind", to_string(v.dataset_kind)},
           {"manifest", v.manifest.string()},
           {"index", v.index_path.string()},
           {"cache_dir", v.cache_dir.string()},
           {"output", v.output.string()},
           {"embedder", client_json(v.embedder)},
           {"scorer", client_json(v.scorer)},
           {"generator", client_json(v.generator)}};
}

std::string_view build_version() noexcept { return VICL_GIT_DESCRIBE; }

void to_json(json& j, const RunRecord& v) {
  j = json{{"query_id", v.query_id},
           {"demo_ids", v.demo_ids},
           {"prompt_sha256", v.prompt_sha256},
           {"raw_output", v.raw_output},
           {"prediction", v.prediction ? json(*v.prediction) : json(nullptr)},
           {"gold", v.gold},
           {"correct", v.correct}};
  if (v.error) j["error"] = *v.error;
}

void from_json(const json& j, RunRecord& v) {
  v.query_id = j.at("query_id").get<std::string>();
  v.demo_ids = j.at("demo_ids").get<std::vector<std::string>>();
  v.prompt_sha256 = j.at("prompt_sha256").get<std::string>();
  v.raw_output = j.at("raw_output").get<std::string>();
  const auto& p = j.at("prediction");
  v.prediction = p.is_null() ? std::nullopt : std::optional<std::string>(p.get<std::string>());
  v.gold = j.at("gold").get<std::string>();
  v.correct = j.at("correct").get<bool>();
  if (auto it = j.find("error"); it != j.end() && !it->is_null()) {
    v.error = it->get<std::string>();
  } else {
    v.error.reset();
  }
}

std::optional<std::string> normalize_answer(std::string_view raw, const LabelSet& labels) {
  std::string text = lowercase(trim(raw));
  while (!text.empty() && std::ispunct(static_cast<unsigned char>(text.back()))) text.pop_back();
  while (!text.empty() && std::ispunct(static_cast<unsigned char>(text.front()))) text.erase(text.begin());
  const std::string_view t = trim(text);
  for (const auto& label : labels.labels()) {
    if (lowercase(label) == t) return label;
  }
  std::optional<std::string> found;
  for (const auto& label : labels.labels()) {
    if (contains_word(t, lowercase(label))) {
      if (found) return std::nullopt;
      found = label;
    }
  }
  return found;
}

ClientSet ClientSet::from_config(const RunConfig& config) {
  ClientSet set;
  set.embedder = make_client(config.embedder);
  auto same = [](const ClientConfig& a, const ClientConfig& b) {
    return a.endpoint == b.endpoint && a.model_id == b.model_id && a.script_path == b.script_path &&
           a.mock_dim == b.mock_dim && a.timeout == b.timeout && a.retries == b.retries &&
           a.max_in_flight == b.max_in_flight;
  };
  set.scorer = same(config.scorer, config.embedder) ? set.embedder : make_client(config.scorer);
  if (same(config.generator, config.embedder)) {
    set.generator = set.embedder;
  } else if (same(config.generator, config.scorer)) {
    set.generator = set.scorer;
  } else {
    set.generator = make_client(config.generator);
  }
  return set;
}

std::vector<DemonstrationCandidate> sample_items(std::vector<DemonstrationCandidate> items, std::size_t limit,
                                                 std::uint64_t seed) {
  if (items.size() <= limit) return items;
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  SplitMix64 rng(seed);
  rng.shuffle(order);
  order.resize(limit);
  std::sort(order.begin(), order.end());
  std::vector<DemonstrationCandidate> out;
  out.reserve(limit);
  for (std::size_t i : order) out.push_back(std::move(items[i]));
  return out;
}

Workspace Workspace::prepare(const RunConfig& config, ClientSet clients) {
  if (config.manifest.empty()) fail(Errc::invalid_argument, "no manifest configured");
  if (!clients.embedder || !clients.scorer || !clients.generator) {
    fail(Errc::invalid_argument, "workspace needs embedder, scorer and generator clients");
  }
  auto manifest = load_manifest(config.manifest, config.dataset_kind);
  if (manifest.candidates.empty()) fail(Errc::data, "manifest has no candidate records");
  if (manifest.tests.empty()) fail(Errc::data, "manifest has no test records");

  Workspace ws;
  ws.candidates = sample_items(std::move(manifest.candidates), config.max_candidates, config.seed);
  ws.tests = sample_items(std::move(manifest.tests), config.max_tests, config.seed + 1);
  ws.labels = std::move(manifest.labels);
  ws.clients = std::move(clients);
  ws.cache = config.cache_dir.empty() ? std::make_shared<GenerationCache>()
                                      : std::make_shared<GenerationCache>(config.cache_dir);

  if (!config.index_path.empty() && std::filesystem::exists(config.index_path)) {
    const auto stored = read_index(config.index_path);
    for (const auto& c : ws.candidates) {
      if (!stored.find(c.id)) {
        fail(Errc::data, "index " + config.index_path.string() + " has no entry for candidate '" + c.id +
                             "'; rebuild it with build-index");
      }
    }
    std::map<std::string, bool, std::less<>> wanted;
    for (const auto& c : ws.candidates) wanted.emplace(c.id, true);
    ws.index = stored.filtered([&](std::string_view id) { return wanted.count(id) > 0; });
  } else {
    ws.index = build_index(ws.candidates, *ws.clients.embedder);
    if (!config.index_path.empty()) write_index(ws.index, config.index_path);
  }
  return ws;
}

const DemonstrationCandidate& Workspace::candidate(std::string_view id) const {
  for (const auto& c : candidates) {
    if (c.id == id) return c;
  }
  fail(Errc::data, "unknown candidate '" + std::string(id) + "'");
}

void ensure_summaries(const RunConfig& config, Workspace& workspace) {
  std::vector<DemonstrationCandidate> missing;
  for (const auto& c : workspace.candidates) {
    auto it = workspace.summaries.find(c.id);
    if (it == workspace.summaries.end() || it->second.strategy != config.strategy) missing.push_back(c);
  }
  if (missing.empty()) return;
  auto summaries = summarize_pool(missing, config.strategy, *workspace.clients.generator, *workspace.cache);
  for (std::size_t i = 0; i < missing.size(); ++i) workspace.summaries[missing[i].id] = std::move(summaries[i]);
}

struct JsonlRecordWriter::Impl {
  std::filesystem::path path;
  std::ofstream out;
  std::mutex mutex;
  std::vector<std::optional<std::string>> pending;
  std::size_t next = 0;
};

JsonlRecordWriter::JsonlRecordWriter(const std::filesystem::path& path) : impl_(std::make_unique<Impl>()) {
  impl_->path = path;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  impl_->out.open(path, std::ios::binary | std::ios::trunc);
  if (!impl_->out) fail(Errc::data, "cannot open " + path.string() + " for writing");
}

JsonlRecordWriter::~JsonlRecordWriter() = default;

void JsonlRecordWriter::begin(const json& header, std::size_t total) {
  std::lock_guard lock(impl_->mutex);
  impl_->pending.assign(total, std::nullopt);
  impl_->next = 0;
  impl_->out << header.dump() << '\n';
  impl_->out.flush();
}

void JsonlRecordWriter::submit(std::size_t index, const RunRecord& record) {
  json line = record;
  line["type"] = "record";
  std::lock_guard lock(impl_->mutex);
  if (index >= impl_->pending.size()) fail(Errc::invalid_argument, "record index out of range");
  impl_->pending[index] = line.dump();
  bool wrote = false;
  while (impl_->next < impl_->pending.size() && impl_->pending[impl_->next]) {
    impl_->out << *impl_->pending[impl_->next] << '\n';
    impl_->pending[impl_->next].reset();
    ++impl_->next;
    wrote = true;
  }
  if (wrote) impl_->out.flush();
}

void JsonlRecordWriter::finish(const json& summary) {
  std::lock_guard lock(impl_->mutex);
  impl_->out << summary.dump() << '\n';
  impl_->out.close();
  if (!impl_->out) fail(Errc::data, "failed writing " + impl_->path.string());
}

namespace {

EvalResult tally(std::vector<RunRecord> records) {
  EvalResult r;
  r.n_total = records.size();
  for (const auto& rec : records) {
    if (rec.correct) ++r.n_correct;
    if (rec.error) ++r.n_errored;
  }
  r.accuracy = r.n_total ? static_cast<double>(r.n_correct) / static_cast<double>(r.n_total) : 0.0;
  r.failed = r.n_errored * 10 > r.n_total;
  r.records = std::move(records);
  return r;
}

json summary_json(const EvalResult& r) {
  return json{{"type", "summary"},
              {"accuracy", r.accuracy},
              {"n_correct", r.n_correct},
              {"n_total", r.n_total},
              {"n_errored", r.n_errored},
              {"failed", r.failed}};
}

// Positive first, then negatives, both in rerank order; widens to the whole
// index when the reranked pool lacks either.
std::vector<DemonstrationCandidate> positive_and_negatives(const RunConfig& config, Workspace& ws,
                                                           const DemonstrationCandidate& query) {
  const auto clients = ws.clients.view();
  auto selection = select_demonstrations(query.image, ws.index, ws.candidates,
                                         {config.pool_size, std::min(config.demo_count, config.pool_size), config.rerank},
                                         clients, *ws.cache);
  std::vector<std::string> order;
  for (const auto& p : selection.pool) order.push_back(p.id);

  const std::size_t negatives_needed = config.demo_count - 1;
  auto pick = [&](const std::vector<std::string>& ids, std::optional<DemonstrationCandidate>& positive,
                  std::vector<DemonstrationCandidate>& negatives) {
    for (const auto& id : ids) {
      const auto& c = ws.candidate(id);
      if (labels_equal(c.answer, query.answer)) {
        if (!positive) positive = c;
      } else if (negatives.size() < negatives_needed &&
                 std::none_of(negatives.begin(), negatives.end(),
                              [&](const DemonstrationCandidate& n) { return n.id == c.id; })) {
        negatives.push_back(c);
      }
    }
  };
  std::optional<DemonstrationCandidate> positive;
  std::vector<DemonstrationCandidate> negatives;
  pick(order, positive, negatives);
  if (!positive || negatives.size() < negatives_needed) {
    const auto embedding = clients.embedder->embed_image(query.image.bytes());
    std::vector<std::string> all;
    for (const auto& r : retrieve_top_k(ws.index, embedding, ws.index.size())) all.push_back(r.id);
    pick(all, positive, negatives);
  }
  if (!positive) fail(Errc::data, "no candidate carries the gold label of '" + query.id + "'");
  if (negatives.size() < negatives_needed) fail(Errc::data, "not enough negative candidates for '" + query.id + "'");
  std::vector<DemonstrationCandidate> out{*positive};
  out.insert(out.end(), negatives.begin(), negatives.end());
  return out;
}

RunRecord evaluate_query(const RunConfig& config, Workspace& ws, const DemonstrationCandidate& query,
                         const DemoSelector& selector) {
  RunRecord rec;
  rec.query_id = query.id;
  rec.gold = query.answer;
  try {
    auto composed = compose_query(config, ws, query, selector(query));
    rec.demo_ids = std::move(composed.demo_ids);
    rec.prompt_sha256 = composed.prompt.sha256_hex();
    rec.raw_output = ws.clients.generator->generate(composed.prompt);
    rec.prediction = normalize_answer(rec.raw_output, ws.labels);
    rec.correct = rec.prediction && labels_equal(*rec.prediction, rec.gold);
  } catch (const Error& e) {
    if (!is_recordable(e)) throw Error(e.code(), "query '" + query.id + "': " + e.what());
    rec.error = e.what();
    rec.correct = false;
    rec.prediction.reset();
  }
  return rec;
}

}  // namespace

std::vector<DemonstrationCandidate> default_demonstrations(const RunConfig& config, Workspace& workspace,
                                                           const DemonstrationCandidate& query) {
  if (config.mode == PromptMode::ZeroShot) return {};
  if (config.order.kind == OrderPolicy::Kind::PositiveAt) return positive_and_negatives(config, workspace, query);
  if (config.retrieval == RetrievalMethod::Random) {
    std::vector<std::size_t> order(workspace.candidates.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    SplitMix64 rng(id_seed(config.seed, query.id));
    rng.shuffle(order);
    std::vector<DemonstrationCandidate> out;
    for (std::size_t i = 0; i < std::min(config.demo_count, order.size()); ++i) {
      out.push_back(workspace.candidates[order[i]]);
    }
    return out;
  }
  return select_demonstrations(query.image, workspace.index, workspace.candidates,
                               {config.pool_size, config.demo_count, config.rerank}, workspace.clients.view(),
                               *workspace.cache)
      .demonstrations;
}

ComposedQuery compose_query(const RunConfig& config, Workspace& workspace, const DemonstrationCandidate& query,
                            const std::vector<DemonstrationCandidate>& demos) {
  std::vector<ComposedDemonstration> composed;
  composed.reserve(demos.size());
  for (const auto& d : demos) {
    if (config.mode == PromptMode::VICL) {
      auto it = workspace.summaries.find(d.id);
      const Summary summary =
          it != workspace.summaries.end() && it->second.strategy == config.strategy
              ? it->second
              : summarize_demonstration(d, config.strategy, *workspace.clients.generator, *workspace.cache);
      composed.push_back(compose_text_demonstration(d, summary));
    } else {
      composed.push_back(compose_image_demonstration(d));
    }
  }
  OrderPolicy policy = config.order;
  if (policy.kind == OrderPolicy::Kind::PositiveAt && policy.positive_id.empty() && !demos.empty()) {
    policy.positive_id = demos.front().id;
  }
  composed = order_demonstrations(std::move(composed), policy);
  composed = fit_to_budget(config.mode, workspace.labels, std::move(composed), query.image, config.budget_tokens,
                           TokenEstimator{config.image_tokens});
  ComposedQuery out;
  for (const auto& c : composed) out.demo_ids.push_back(c.source_id);
  out.prompt = render_prompt(config.mode, workspace.labels, composed, query.image);
  return out;
}

EvalResult run_evaluation(const RunConfig& config, Workspace& workspace, RecordSink* sink) {
  return run_evaluation(
      config, workspace, workspace.tests,
      [&](const DemonstrationCandidate& q) { return default_demonstrations(config, workspace, q); }, sink);
}

EvalResult run_evaluation(const RunConfig& config, Workspace& workspace,
                          const std::vector<DemonstrationCandidate>& tests, const DemoSelector& selector,
                          RecordSink* sink) {
  config.validate();
  if (workspace.labels.empty()) fail(Errc::invalid_argument, "workspace has no labels");
  if (config.mode == PromptMode::VICL) ensure_summaries(config, workspace);
  if (sink) {
    sink->begin(json{{"type", "header"},
                     {"version", build_version()},
                     {"started_at", utc_timestamp()},
                     {"config", config},
                     {"labels", workspace.labels.labels()},
                     {"n_tests", tests.size()}},
                tests.size());
  }
  std::vector<RunRecord> records(tests.size());
  parallel_for(tests.size(), config.max_in_flight, [&](std::size_t i) {
    records[i] = evaluate_query(config, workspace, tests[i], selector);
    if (sink) sink->submit(i, records[i]);
  });
  auto result = tally(std::move(records));
  if (sink) sink->finish(summary_json(result));
  return result;
}

EvalResult accuracy_from_records_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::data, "cannot open " + path.string());
  std::vector<RunRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const auto j = json::parse(line);
      if (j.value("type", "") == "record") records.push_back(j.get<RunRecord>());
    } catch (const json::exception& e) {
      fail(Errc::data, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return tally(std::move(records));
}

std::string_view to_string(SweepAxis axis) noexcept {
  switch (axis) {
    case SweepAxis::DemoCount: return "demo-count";
    case SweepAxis::ContextBudget: return "context-budget";
    case SweepAxis::OrderSection: return "order-section";
  }
  return "demo-count";
}

SweepAxis parse_sweep_axis(std::string_view text) {
  const auto t = lowercase(text);
  if (t == "demo-count" || t == "democount") return SweepAxis::DemoCount;
  if (t == "context-budget" || t == "contextbudget") return SweepAxis::ContextBudget;
  if (t == "order-section" || t == "ordersection") return SweepAxis::OrderSection;
  fail(Errc::invalid_argument,
       "unknown sweep axis '" + std::string(text) + "' (demo-count, context-budget, order-section)");
}

std::vector<SweepRow> run_sweep(const RunConfig& config, Workspace& workspace, SweepAxis axis,
                                const std::vector<std::size_t>& values, const std::filesystem::path& records_dir) {
  std::vector<std::pair<std::string, RunConfig>> settings;
  switch (axis) {
    case SweepAxis::DemoCount:
      for (std::size_t n : values) {
        RunConfig c = config;
        c.demo_count = n;
        c.pool_size = std::max(c.pool_size, n);
        settings.emplace_back(std::to_string(n), c);
      }
      break;
    case SweepAxis::ContextBudget:
      for (std::size_t b : values) {
        RunConfig c = config;
        c.budget_tokens = b;
        settings.emplace_back(std::to_string(b), c);
      }
      break;
    case SweepAxis::OrderSection:
      for (Section s : {Section::Head, Section::Middle, Section::Tail}) {
        RunConfig c = config;
        c.order = OrderPolicy::positive_at(s);
        settings.emplace_back(std::string(to_string(s)), c);
      }
      break;
  }
  if (settings.empty()) fail(Errc::invalid_argument, "sweep has no settings");

  std::vector<SweepRow> rows;
  for (auto& [name, c] : settings) {
    SweepRow row;
    row.setting = name;
    try {
      std::unique_ptr<JsonlRecordWriter> writer;
      if (!records_dir.empty()) {
        writer = std::make_unique<JsonlRecordWriter>(records_dir /
                                                     (std::string(to_string(axis)) + "-" + name + ".jsonl"));
      }
      auto result = run_evaluation(c, workspace, writer.get());
      row.accuracy = result.accuracy;
      row.n_correct = result.n_correct;
      row.n_total = result.n_total;
      if (result.failed) row.error = std::to_string(result.n_errored) + " of " + std::to_string(result.n_total) +
                                     " items errored";
      row.records = std::move(result.records);
    } catch (const Error& e) {
      row.accuracy = std::nan("");
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& out) {
  out << "setting,accuracy,n_correct,n_total\n";
  std::ostringstream line;
  line << std::setprecision(17);
  for (const auto& r : rows) {
    line.str({});
    line << r.setting << ',';
    if (std::isnan(r.accuracy)) {
      line << "nan";
    } else {
      line << r.accuracy;
    }
    line << ',' << r.n_correct << ',' << r.n_total << '\n';
    out << line.str();
  }
}

json sweep_json(SweepAxis axis, const std::vector<SweepRow>& rows, const RunConfig& config) {
  json settings = json::array();
  for (const auto& r : rows) {
    json row{{"setting", r.setting},
             {"accuracy", std::isnan(r.accuracy) ? json(nullptr) : json(r.accuracy)},
             {"n_correct", r.n_correct},
             {"n_total", r.n_total}};
    if (r.error) row["error"] = *r.error;
    settings.push_back(std::move(row));
  }
  return json{{"axis", to_string(axis)},
              {"version", build_version()},
              {"generated_at", utc_timestamp()},
              {"config", config},
              {"settings", settings}};
}

}  // namespace vicl
