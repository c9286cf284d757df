#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <pthread.h>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "config.hpp"
#include "vicl/conformance.hpp"
#include "vicl/error.hpp"
#include "vicl/evaluator.hpp"
#include "vicl/flow_analysis.hpp"
#include "vicl/mock_client.hpp"
#include "vicl/mock_server.hpp"
#include "vicl/retrieval.hpp"
#include "vicl/summarizer.hpp"
#include "vicl/unlearning.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace vicl::cli {
namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kClient = 3 };

int exit_code(Errc code) {
  switch (code) {
    case Errc::invalid_argument: return kUsage;
    case Errc::transport:
    case Errc::permanent:
    case Errc::unsupported: return kClient;
    default: return kData;
  }
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::data, "cannot write " + path.string());
    out << content;
    if (!out) fail(Errc::data, "failed writing " + path.string());
  }
  fs::rename(tmp, path);
}

// "-" or empty means standard output.
void emit(const fs::path& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content << std::flush;
  } else {
    write_file(path, content);
  }
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(digits) << v;
  return ss.str();
}

/// Options shared by the pipeline subcommands.
struct Common {
  std::string config_path;
  std::vector<std::pair<std::string, std::string>> overrides;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("-c,--config", c.config_path, "Config file ([section] key = value)");
  sub->add_option_function<std::vector<std::string>>(
      "--set",
      [&c](const std::vector<std::string>& items) {
        for (const auto& item : items) {
          const auto eq = item.find('=');
          if (eq == std::string::npos) fail(Errc::invalid_argument, "--set expects section.key=value, got '" + item + "'");
          c.overrides.emplace_back(item.substr(0, eq), item.substr(eq + 1));
        }
      },
      "Override a config key (section.key=value); repeatable");
}

void add_override(CLI::App* sub, Common& c, const std::string& flag, const std::string& key, const std::string& help) {
  sub->add_option_function<std::string>(
      flag, [&c, key](const std::string& v) { c.overrides.emplace_back(key, v); }, help);
}

void add_data_flags(CLI::App* sub, Common& c) {
  add_override(sub, c, "--manifest", "data.manifest", "Dataset manifest (JSON Lines)");
  add_override(sub, c, "--index", "data.index", "Embedding index file");
  add_override(sub, c, "--cache-dir", "data.cache_dir", "Generation cache directory");
  add_override(sub, c, "--endpoint", "client.endpoint", "Endpoint for every client (http://host:port or mock:<modes>)");
  add_override(sub, c, "--dataset-kind", "run.dataset_kind", "emotion | object");
  add_override(sub, c, "--seed", "run.seed", "Seed for sampling and seeded choices");
  add_override(sub, c, "--max-candidates", "run.max_candidates", "Candidate sample size");
  add_override(sub, c, "--max-tests", "run.max_tests", "Test sample size");
  add_override(sub, c, "--max-in-flight", "run.max_in_flight", "Concurrent queries");
}

void add_run_flags(CLI::App* sub, Common& c) {
  add_override(sub, c, "--mode", "run.mode", "zero-shot | icl | vicl");
  add_override(sub, c, "-n,--demo-count", "run.demo_count", "Demonstrations per prompt");
  add_override(sub, c, "-k,--pool-size", "run.pool_size", "Retrieved candidates before reranking");
  add_override(sub, c, "--strategy", "run.strategy", "standard | task-intent | image-parsing | iois");
  add_override(sub, c, "--order", "run.order", "rerank | head | middle | tail");
  add_override(sub, c, "--budget", "run.budget_tokens", "Context budget in estimated tokens");
  add_override(sub, c, "--rerank", "run.rerank", "true | false");
  add_override(sub, c, "--retrieval", "run.retrieval", "similarity | random");
}

Settings settings_for(const Common& c) {
  std::optional<ConfigFile> file;
  if (!c.config_path.empty()) file = load_config(c.config_path);
  const char* env = std::getenv("VICL_ENDPOINT");
  auto settings = resolve_settings(file ? &*file : nullptr, env ? env : "", c.overrides);
  settings.run.validate();
  return settings;
}

Workspace open_workspace(const RunConfig& config) { return Workspace::prepare(config, ClientSet::from_config(config)); }

json header_for(const RunConfig& config, std::string_view command) {
  return json{{"type", "header"}, {"command", command}, {"version", build_version()}, {"config", config}};
}

void print_result_table(std::ostream& out, const std::string& name, const EvalResult& r) {
  out << std::left << std::setw(14) << name << " accuracy " << fixed(r.accuracy) << "  (" << r.n_correct << "/"
      << r.n_total << ", errored " << r.n_errored << ")" << (r.failed ? "  FAILED" : "") << "\n";
}

// --- subcommands -----------------------------------------------------------

int cmd_build_index(const Common& c) {
  const auto settings = settings_for(c);
  const auto& config = settings.run;
  if (config.index_path.empty()) fail(Errc::invalid_argument, "build-index needs --index or data.index");
  if (config.manifest.empty()) fail(Errc::invalid_argument, "build-index needs --manifest or data.manifest");
  const auto manifest = load_manifest(config.manifest, config.dataset_kind);
  const auto candidates = sample_items(manifest.candidates, config.max_candidates, config.seed);
  const auto embedder = make_client(config.embedder);
  const auto index = build_index(candidates, *embedder);
  write_index(index, config.index_path);
  std::cout << "indexed " << index.size() << " candidates (dim " << index.dim() << ") -> " << config.index_path.string()
            << "\n";
  return kOk;
}

int cmd_summarize(const Common& c) {
  const auto settings = settings_for(c);
  const auto& config = settings.run;
  auto ws = open_workspace(config);
  const auto summaries =
      summarize_pool(ws.candidates, config.strategy, *ws.clients.generator, *ws.cache);
  std::string out = header_for(config, "summarize").dump() + "\n";
  for (std::size_t i = 0; i < summaries.size(); ++i) {
    json line = summaries[i];
    line["type"] = "summary";
    line["label"] = ws.candidates[i].answer;
    out += line.dump() + "\n";
  }
  emit(config.output, out);
  if (!config.output.empty() && config.output != "-") {
    std::cout << "summarized " << summaries.size() << " candidates (" << to_string(config.strategy) << ") -> "
              << config.output.string() << "\n";
  }
  return kOk;
}

int cmd_retrieve(const Common& c, const std::vector<std::string>& query_ids) {
  const auto settings = settings_for(c);
  const auto& config = settings.run;
  auto ws = open_workspace(config);
  std::vector<DemonstrationCandidate> queries;
  if (query_ids.empty()) {
    queries = ws.tests;
  } else {
    for (const auto& id : query_ids) {
      auto it = std::find_if(ws.tests.begin(), ws.tests.end(), [&](const auto& t) { return t.id == id; });
      if (it == ws.tests.end()) fail(Errc::invalid_argument, "unknown test id '" + id + "'");
      queries.push_back(*it);
    }
  }
  std::string out = header_for(config, "retrieve").dump() + "\n";
  for (const auto& q : queries) {
    const auto sel = select_demonstrations(q.image, ws.index, ws.candidates,
                                           {config.pool_size, config.demo_count, config.rerank}, ws.clients.view(),
                                           *ws.cache);
    json pool = json::array();
    for (const auto& p : sel.pool) {
      json entry{{"id", p.id}, {"retrieval_score", p.retrieval_score}};
      if (p.rerank_score) entry["rerank_score"] = *p.rerank_score;
      pool.push_back(std::move(entry));
    }
    json demos = json::array();
    for (const auto& d : sel.demonstrations) demos.push_back(d.id);
    out += json{{"type", "retrieval"}, {"query_id", q.id}, {"caption", sel.caption}, {"pool", pool},
                {"demonstrations", demos}}
               .dump() +
           "\n";
  }
  emit(config.output, out);
  return kOk;
}

int cmd_run(const Common& c) {
  const auto settings = settings_for(c);
  const auto& config = settings.run;
  if (config.output.empty()) fail(Errc::invalid_argument, "run needs --output or data.output");
  auto ws = open_workspace(config);
  JsonlRecordWriter writer(config.output);
  const auto result = run_evaluation(config, ws, &writer);
  print_result_table(std::cout, std::string(to_string(config.mode)), result);
  std::cout << "records -> " << config.output.string() << "\n";
  return result.failed ? kClient : kOk;
}

int cmd_sweep(const Common& c, const std::string& csv_path, const std::string& json_path) {
  const auto settings = settings_for(c);
  auto config = settings.run;
  auto ws = open_workspace(config);
  const auto rows = run_sweep(config, ws, settings.sweep.axis, settings.sweep.values, settings.sweep.records_dir);
  std::ostringstream csv;
  write_sweep_csv(rows, csv);
  emit(csv_path, csv.str());
  if (!json_path.empty()) write_file(json_path, sweep_json(settings.sweep.axis, rows, config).dump(2) + "\n");
  bool any_error = false;
  for (const auto& r : rows) {
    std::cerr << to_string(settings.sweep.axis) << "=" << r.setting << "  accuracy "
              << (r.error && r.n_total == 0 ? std::string("n/a") : fixed(r.accuracy)) << "  (" << r.n_correct << "/"
              << r.n_total << ")";
    if (r.error) {
      std::cerr << "  error: " << *r.error;
      any_error = true;
    }
    std::cerr << "\n";
  }
  return any_error ? kData : kOk;
}

int cmd_unlearn(const Common& c, const std::string& out_dir) {
  const auto settings = settings_for(c);
  const auto& config = settings.run;
  auto ws = open_workspace(config);
  const auto sets = build_unlearning_sets(ws.candidates, ws.tests, ws.labels, config.seed);
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  json sets_doc = unlearning_sets_json(sets);
  sets_doc["version"] = build_version();
  sets_doc["config"] = config;
  write_file(dir / "sets.json", sets_doc.dump(2) + "\n");
  JsonlRecordWriter unlearning_writer(dir / "unlearning.jsonl");
  JsonlRecordWriter all_writer(dir / "all.jsonl");
  const auto result = run_unlearning(config, ws, sets, &unlearning_writer, &all_writer);
  print_result_table(std::cout, "unlearning", result.unlearning);
  print_result_table(std::cout, "all", result.all);
  for (const auto& s : sets.spec.sublabels) {
    std::cout << "  " << s << ": " << sets.spec.original.at(s) << " -> " << sets.spec.relabel.at(s) << "\n";
  }
  return result.unlearning.failed || result.all.failed ? kClient : kOk;
}

struct FlowArgs {
  std::vector<std::string> traces;
  std::string output;
  std::string sidecar;
  std::string save_traces;
  std::size_t limit = 1;
  bool head_averaged = false;
};

int cmd_analyze_flow(const Common& c, const FlowArgs& a) {
  std::vector<TraceBundle> bundles;
  std::vector<std::string> sources;
  std::optional<RunConfig> config;
  if (!a.traces.empty()) {
    for (const auto& t : a.traces) {
      bundles.push_back(load_trace_file(t));
      sources.push_back(t);
    }
  } else {
    // No trace files: compose prompts for the first tests and ask the generator.
    config = settings_for(c).run;
    if (config->mode == PromptMode::ZeroShot) fail(Errc::invalid_argument, "flow analysis needs demonstrations");
    auto ws = open_workspace(*config);
    const std::size_t n = std::min(a.limit, ws.tests.size());
    for (std::size_t i = 0; i < n; ++i) {
      const auto& q = ws.tests[i];
      const auto composed = compose_query(*config, ws, q, default_demonstrations(*config, ws, q));
      auto bundle = ws.clients.generator->fetch_trace(composed.prompt, q.answer);
      bundle.validate();
      if (!a.save_traces.empty()) save_trace_file(bundle, fs::path(a.save_traces) / (q.id + ".json"));
      bundles.push_back(std::move(bundle));
      sources.push_back(q.id);
    }
  }
  if (bundles.empty()) fail(Errc::data, "no traces to analyze");
  std::vector<FlowReport> reports;
  for (const auto& b : bundles) reports.push_back(analyze_trace(b));
  const auto report = reports.size() == 1 ? reports.front() : mean_report(reports);
  std::ostringstream csv;
  write_flow_csv(a.head_averaged ? report.head_averaged() : report.layers, csv);
  emit(a.output, csv.str());
  if (!a.sidecar.empty()) {
    json doc = flow_sidecar_json(report);
    doc["version"] = build_version();
    doc["traces"] = sources;
    doc["aggregate"] = reports.size() == 1 ? "single" : "mean";
    if (config) doc["config"] = *config;
    write_file(a.sidecar, doc.dump(2) + "\n");
  }
  return kOk;
}

struct ServeArgs {
  std::string modes = "mock:clustered+echo-label";
  std::string model_id = "mock";
  std::size_t dim = 16;
  std::string script;
  std::string host = "127.0.0.1";
  int port = 0;
  std::string port_file;
  bool no_trace = false;
};

int cmd_mock_serve(const ServeArgs& a) {
  if (!is_mock_endpoint(a.modes)) fail(Errc::invalid_argument, "--modes must look like mock:<mode>[+<mode>...]");
  MockOptions options;
  options.modes = parse_mock_modes(a.modes);
  options.model_id = a.model_id;
  options.dim = a.dim;
  options.trace_enabled = !a.no_trace;
  if (options.modes.scripted) {
    if (a.script.empty()) fail(Errc::invalid_argument, "mock:scripted needs --script");
    options.script = MockScript::load(a.script);
  }

  // Block termination signals before any thread starts so sigwait sees them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  InferenceServer server(std::make_shared<MockClient>(options));
  const int port = server.bind(a.host, a.port);
  server.start();
  if (!a.port_file.empty()) write_file(a.port_file, std::to_string(port) + "\n");
  std::cerr << "serving " << a.modes << " on http://" << a.host << ":" << port << "\n";
  int sig = 0;
  sigwait(&signals, &sig);
  server.stop();
  return kOk;
}

int cmd_conformance(const std::string& url, std::size_t timeout_ms) {
  const auto checks = run_conformance(url, std::chrono::milliseconds(timeout_ms));
  for (const auto& ch : checks) {
    std::cout << (ch.passed ? "PASS " : "FAIL ") << ch.name;
    if (!ch.detail.empty()) std::cout << "  " << ch.detail;
    std::cout << "\n";
  }
  return all_passed(checks) ? kOk : kClient;
}

int run(int argc, char** argv) {
  CLI::App app{"Visual in-context learning toolkit", "vicl"};
  app.require_subcommand(1);
  // Top-level help covers every subcommand and flag.
  app.set_help_flag();
  app.set_help_all_flag("-h,--help", "Print help for every subcommand and exit");
  app.set_version_flag("--version", std::string(build_version()));

  Common common;

  auto* build = app.add_subcommand("build-index", "Embed candidates and write the index");
  add_common(build, common);
  add_data_flags(build, common);

  auto* summarize = app.add_subcommand("summarize", "Summarize candidates into JSON Lines");
  add_common(summarize, common);
  add_data_flags(summarize, common);
  add_override(summarize, common, "--strategy", "run.strategy", "standard | task-intent | image-parsing | iois");
  add_override(summarize, common, "-o,--output", "data.output", "Output path (default: standard output)");

  std::vector<std::string> query_ids;
  auto* retrieve = app.add_subcommand("retrieve", "Show retrieval pools and selected demonstrations");
  add_common(retrieve, common);
  add_data_flags(retrieve, common);
  add_override(retrieve, common, "-n,--demo-count", "run.demo_count", "Demonstrations per prompt");
  add_override(retrieve, common, "-k,--pool-size", "run.pool_size", "Retrieved candidates before reranking");
  add_override(retrieve, common, "--rerank", "run.rerank", "true | false");
  add_override(retrieve, common, "-o,--output", "data.output", "Output path (default: standard output)");
  retrieve->add_option("--query", query_ids, "Test ids to retrieve for (default: all)");

  auto* run_cmd = app.add_subcommand("run", "Evaluate one configuration");
  add_common(run_cmd, common);
  add_data_flags(run_cmd, common);
  add_run_flags(run_cmd, common);
  add_override(run_cmd, common, "-o,--output", "data.output", "Results JSON Lines path");

  std::string sweep_csv;
  std::string sweep_json_path;
  auto* sweep = app.add_subcommand("sweep", "Evaluate a range of settings");
  add_common(sweep, common);
  add_data_flags(sweep, common);
  add_run_flags(sweep, common);
  add_override(sweep, common, "--axis", "sweep.axis", "demo-count | context-budget | order-section");
  add_override(sweep, common, "--values", "sweep.values", "Comma-separated setting values");
  add_override(sweep, common, "--records-dir", "sweep.records_dir", "Directory for per-setting records");
  sweep->add_option("-o,--output", sweep_csv, "CSV path (default: standard output)");
  sweep->add_option("--json", sweep_json_path, "JSON summary path");

  std::string unlearn_dir;
  auto* unlearn = app.add_subcommand("unlearn", "Relabel five sub-classes through demonstrations");
  add_common(unlearn, common);
  add_data_flags(unlearn, common);
  add_run_flags(unlearn, common);
  unlearn->add_option("--output-dir", unlearn_dir, "Directory for sets and records")->required();

  FlowArgs flow;
  auto* analyze = app.add_subcommand("analyze-flow", "Information-flow scores from attention traces");
  add_common(analyze, common);
  add_data_flags(analyze, common);
  add_run_flags(analyze, common);
  analyze->add_option("--trace", flow.traces, "Trace bundle JSON; repeatable (several are averaged)");
  analyze->add_option("--limit", flow.limit, "Without --trace: number of tests to trace");
  analyze->add_option("--save-traces", flow.save_traces, "Without --trace: directory for fetched traces");
  analyze->add_option("-o,--output", flow.output, "CSV path (default: standard output)");
  analyze->add_option("--sidecar", flow.sidecar, "JSON path for set sizes and head-averaged curves");
  analyze->add_flag("--head-averaged", flow.head_averaged, "Write head-averaged scores to the CSV");

  ServeArgs serve;
  auto* mock_serve = app.add_subcommand("mock-serve", "Serve the deterministic mock over HTTP");
  mock_serve->add_option("--modes", serve.modes, "Mock endpoint spec")->capture_default_str();
  mock_serve->add_option("--model-id", serve.model_id, "Model id")->capture_default_str();
  mock_serve->add_option("--dim", serve.dim, "Embedding dimension")->capture_default_str();
  mock_serve->add_option("--script", serve.script, "Script for mock:scripted");
  mock_serve->add_option("--host", serve.host, "Bind address")->capture_default_str();
  mock_serve->add_option("--port", serve.port, "Port (0 picks a free one)")->capture_default_str();
  mock_serve->add_option("--port-file", serve.port_file, "Write the bound port here once listening");
  mock_serve->add_flag("--no-trace", serve.no_trace, "Answer /v1/trace with an unsupported error");

  std::string conf_url;
  std::size_t conf_timeout = 10000;
  auto* conformance = app.add_subcommand("conformance", "Check a server against the protocol schemas");
  conformance->add_option("url", conf_url, "Base URL, e.g. http://127.0.0.1:8080")->required();
  conformance->add_option("--timeout-ms", conf_timeout, "Per-request timeout")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  if (*build) return cmd_build_index(common);
  if (*summarize) return cmd_summarize(common);
  if (*retrieve) return cmd_retrieve(common, query_ids);
  if (*run_cmd) return cmd_run(common);
  if (*sweep) return cmd_sweep(common, sweep_csv, sweep_json_path);
  if (*unlearn) return cmd_unlearn(common, unlearn_dir);
  if (*analyze) return cmd_analyze_flow(common, flow);
  if (*mock_serve) return cmd_mock_serve(serve);
  if (*conformance) return cmd_conformance(conf_url, conf_timeout);
  return kUsage;
}

}  // namespace
}  // namespace vicl::cli

int main(int argc, char** argv) {
  try {
    return vicl::cli::run(argc, argv);
  } catch (const vicl::Error& e) {
    std::cerr << "vicl: " << e.what() << "\n";
    if (e.code() == vicl::Errc::invalid_argument) std::cerr << "Run with --help for usage.\n";
    return vicl::cli::exit_code(e.code());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "vicl: " << e.what() << "\n";
    return vicl::cli::kData;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "vicl: " << e.what() << "\n";
    return vicl::cli::kData;
  } catch (const std::exception& e) {
    std::cerr << "vicl: " << e.what() << "\n";
    return vicl::cli::kData;
  }
}
