#pragma once

// Zero-Shot / ICL / VICL evaluation runs, answer normalisation, accuracy and
// parameter sweeps.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "vicl/composer.hpp"
#include "vicl/demo_store.hpp"
#include "vicl/inference_client.hpp"
#include "vicl/retrieval.hpp"
#include "vicl/types.hpp"

namespace vicl {

enum class RetrievalMethod { Similarity, Random };

std::string_view to_string(RetrievalMethod method) noexcept;
RetrievalMethod parse_retrieval_method(std::string_view text);

struct RunConfig {
  PromptMode mode = PromptMode::VICL;
  std::size_t demo_count = 4;  // n
  std::size_t pool_size = 20;  // k, retrieved before reranking
  SummaryStrategy strategy = SummaryStrategy::IOIS;
  OrderPolicy order;
  std::size_t budget_tokens = 4096;
  std::size_t image_tokens = 256;
  std::uint64_t seed = 42;
  bool rerank = true;
  RetrievalMethod retrieval = RetrievalMethod::Similarity;
  std::size_t max_candidates = 100;
  std::size_t max_tests = 1000;
  std::size_t max_in_flight = 4;
  DatasetKind dataset_kind = DatasetKind::Emotion;

  std::filesystem::path manifest;
  std::filesystem::path index_path;  // read if present, else built (and written when set)
  std::filesystem::path cache_dir;   // empty: in-memory cache
  std::filesystem::path output;      // results JSONL

  ClientConfig embedder;
  ClientConfig scorer;
  ClientConfig generator;

  /// Throws Error(Errc::invalid_argument).
  void validate() const;
};

void to_json(nlohmann::json& j, const RunConfig& v);

/// Build identifier recorded in result headers.
std::string_view build_version() noexcept;

struct RunRecord {
  std::string query_id;
  std::vector<std::string> demo_ids;
  std::string prompt_sha256;
  std::string raw_output;
  std::optional<std::string> prediction;
  std::string gold;
  bool correct = false;
  std::optional<std::string> error;  // set for errored model calls (counted incorrect)

  friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

void to_json(nlohmann::json& j, const RunRecord& v);
void from_json(const nlohmann::json& j, RunRecord& v);

/// Lowercase, trim and strip trailing punctuation; an exact label match wins,
/// otherwise the single label contained in the text, otherwise nothing.
std::optional<std::string> normalize_answer(std::string_view raw, const LabelSet& labels);

struct ClientSet {
  std::shared_ptr<const InferenceClient> embedder;
  std::shared_ptr<const InferenceClient> scorer;
  std::shared_ptr<const InferenceClient> generator;

  static ClientSet from_config(const RunConfig& config);
  RetrievalClients view() const { return {embedder.get(), scorer.get(), generator.get()}; }
};

/// Everything a run needs: data, index, cache and clients.
struct Workspace {
  std::vector<DemonstrationCandidate> candidates;
  std::vector<DemonstrationCandidate> tests;
  LabelSet labels;
  EmbeddingIndex index;
  std::shared_ptr<GenerationCache> cache;
  ClientSet clients;
  std::map<std::string, Summary, std::less<>> summaries;  // by candidate id

  /// Loads and samples the manifest, reads or builds the index, opens the cache.
  static Workspace prepare(const RunConfig& config, ClientSet clients);

  const DemonstrationCandidate& candidate(std::string_view id) const;
};

/// Keeps at most `limit` items chosen by the seeded generator, in original order.
std::vector<DemonstrationCandidate> sample_items(std::vector<DemonstrationCandidate> items, std::size_t limit,
                                                 std::uint64_t seed);

/// Summarizes every candidate that has no summary yet with the configured strategy.
void ensure_summaries(const RunConfig& config, Workspace& workspace);

/// Receives records of a run. submit() may be called from several threads.
class RecordSink {
 public:
  virtual ~RecordSink() = default;
  virtual void begin(const nlohmann::json& header, std::size_t total) = 0;
  virtual void submit(std::size_t index, const RunRecord& record) = 0;
  virtual void finish(const nlohmann::json& summary) { (void)summary; }
};

/// JSON Lines writer: a header line, then records in test-set order, each
/// flushed as soon as it and all earlier records have completed.
class JsonlRecordWriter final : public RecordSink {
 public:
  explicit JsonlRecordWriter(const std::filesystem::path& path);
  ~JsonlRecordWriter() override;

  void begin(const nlohmann::json& header, std::size_t total) override;
  void submit(std::size_t index, const RunRecord& record) override;
  /// Appends the summary line and closes the file.
  void finish(const nlohmann::json& summary) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct EvalResult {
  double accuracy = 0.0;
  std::size_t n_correct = 0;
  std::size_t n_total = 0;
  std::size_t n_errored = 0;
  bool failed = false;  // more than 10% of items errored
  std::vector<RunRecord> records;
};

/// Demonstrations for one query; overrides the default retrieval path.
using DemoSelector = std::function<std::vector<DemonstrationCandidate>(const DemonstrationCandidate& query)>;

EvalResult run_evaluation(const RunConfig& config, Workspace& workspace, RecordSink* sink = nullptr);
EvalResult run_evaluation(const RunConfig& config, Workspace& workspace,
                          const std::vector<DemonstrationCandidate>& tests, const DemoSelector& selector,
                          RecordSink* sink = nullptr);

/// Default selection for a query under `config`: nothing for Zero-Shot; one
/// positive plus n-1 negatives for positive placement; otherwise retrieve,
/// rerank and truncate.
std::vector<DemonstrationCandidate> default_demonstrations(const RunConfig& config, Workspace& workspace,
                                                           const DemonstrationCandidate& query);

struct ComposedQuery {
  Prompt prompt;
  std::vector<std::string> demo_ids;  // after ordering and budgeting
};

/// Summarizes (VICL), orders, budgets and renders the prompt for one query.
ComposedQuery compose_query(const RunConfig& config, Workspace& workspace, const DemonstrationCandidate& query,
                            const std::vector<DemonstrationCandidate>& demos);

/// Accuracy recomputed from a results JSONL file.
EvalResult accuracy_from_records_file(const std::filesystem::path& path);

enum class SweepAxis { DemoCount, ContextBudget, OrderSection };

std::string_view to_string(SweepAxis axis) noexcept;
SweepAxis parse_sweep_axis(std::string_view text);

struct SweepRow {
  std::string setting;
  double accuracy = 0.0;
  std::size_t n_correct = 0;
  std::size_t n_total = 0;
  std::optional<std::string> error;
  std::vector<RunRecord> records;
};

/// One evaluation per setting over a shared workspace. Settings that fail are
/// reported in their row and the sweep moves on. `values` is ignored for
/// OrderSection, which always runs head, middle and tail. When records_dir is
/// set, each setting's records go to <records_dir>/<axis>-<setting>.jsonl.
std::vector<SweepRow> run_sweep(const RunConfig& config, Workspace& workspace, SweepAxis axis,
                                const std::vector<std::size_t>& values, const std::filesystem::path& records_dir = {});

/// "setting,accuracy,n_correct,n_total"
void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& out);
nlohmann::json sweep_json(SweepAxis axis, const std::vector<SweepRow>& rows, const RunConfig& config);

}  // namespace vicl
