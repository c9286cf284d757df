#include "config.hpp"

#include <cctype>
#include <charconv>
#include <chrono>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "vicl/error.hpp"

namespace vicl::cli {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
  fail(Errc::invalid_argument,
       "invalid value '" + std::string(value) + "' for " + std::string(key) + " (expected " + std::string(expected) + ")");
}

std::size_t parse_size(std::string_view key, std::string_view value) {
  std::size_t out = 0;
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc{} || ptr != end || value.empty()) bad_value(key, value, "a non-negative integer");
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  const auto v = lowercase(value);
  if (v == "true" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "no" || v == "0") return false;
  bad_value(key, value, "true or false");
}

std::filesystem::path parse_path(std::string_view value, const std::filesystem::path& base_dir) {
  std::filesystem::path p{std::string(value)};
  if (p.empty() || p.is_absolute() || base_dir.empty()) return p;
  return base_dir / p;
}

std::vector<std::size_t> parse_list(std::string_view key, std::string_view value) {
  std::vector<std::size_t> out;
  std::string_view rest = value;
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    out.push_back(parse_size(key, trim(rest.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  if (out.empty()) bad_value(key, value, "a comma-separated list of integers");
  return out;
}

// Wraps parser errors so they name the key.
template <typename T>
T parsed(std::string_view key, std::string_view value, T (*parse)(std::string_view)) {
  try {
    return parse(value);
  } catch (const Error& e) {
    fail(Errc::invalid_argument, std::string(key) + ": " + e.what());
  }
}

using Setter = std::function<void(Settings&, std::string_view key, std::string_view value,
                                  const std::filesystem::path& base)>;

void client_setting(ClientConfig& c, std::string_view name, std::string_view key, std::string_view value,
                    const std::filesystem::path& base) {
  if (name == "endpoint") {
    c.endpoint = std::string(value);
  } else if (name == "model_id") {
    c.model_id = std::string(value);
  } else if (name == "timeout_ms") {
    c.timeout = std::chrono::milliseconds(parse_size(key, value));
  } else if (name == "max_in_flight") {
    c.max_in_flight = parse_size(key, value);
  } else if (name == "retries") {
    c.retries = parse_size(key, value);
  } else if (name == "script") {
    c.script_path = parse_path(value, base);
  } else if (name == "mock_dim") {
    c.mock_dim = parse_size(key, value);
  }
}

constexpr std::string_view kClientKeys[] = {"endpoint", "max_in_flight", "mock_dim", "model_id",
                                            "retries",  "script",        "timeout_ms"};

const std::map<std::string, Setter, std::less<>>& setters() {
  static const auto table = [] {
    std::map<std::string, Setter, std::less<>> t;
    auto size_field = [&](const char* key, std::size_t RunConfig::*field) {
      t[key] = [field](Settings& s, auto k, auto v, const auto&) { s.run.*field = parse_size(k, v); };
    };
    t["run.mode"] = [](Settings& s, auto k, auto v, const auto&) { s.run.mode = parsed(k, v, parse_prompt_mode); };
    size_field("run.demo_count", &RunConfig::demo_count);
    size_field("run.pool_size", &RunConfig::pool_size);
    t["run.strategy"] = [](Settings& s, auto k, auto v, const auto&) {
      s.run.strategy = parsed(k, v, parse_summary_strategy);
    };
    t["run.order"] = [](Settings& s, auto k, auto v, const auto&) { s.run.order = parsed(k, v, parse_order_policy); };
    size_field("run.budget_tokens", &RunConfig::budget_tokens);
    size_field("run.image_tokens", &RunConfig::image_tokens);
    t["run.seed"] = [](Settings& s, auto k, auto v, const auto&) { s.run.seed = parse_size(k, v); };
    t["run.rerank"] = [](Settings& s, auto k, auto v, const auto&) { s.run.rerank = parse_bool(k, v); };
    t["run.retrieval"] = [](Settings& s, auto k, auto v, const auto&) {
      s.run.retrieval = parsed(k, v, parse_retrieval_method);
    };
    size_field("run.max_candidates", &RunConfig::max_candidates);
    size_field("run.max_tests", &RunConfig::max_tests);
    size_field("run.max_in_flight", &RunConfig::max_in_flight);
    t["run.dataset_kind"] = [](Settings& s, auto k, auto v, const auto&) {
      s.run.dataset_kind = parsed(k, v, parse_dataset_kind);
    };
    auto path_field = [&](const char* key, std::filesystem::path RunConfig::*field) {
      t[key] = [field](Settings& s, auto, auto v, const auto& base) { s.run.*field = parse_path(v, base); };
    };
    path_field("data.manifest", &RunConfig::manifest);
    path_field("data.index", &RunConfig::index_path);
    path_field("data.cache_dir", &RunConfig::cache_dir);
    path_field("data.output", &RunConfig::output);
    for (std::string_view name : kClientKeys) {
      const std::string n(name);
      t["client." + n] = [n](Settings& s, auto k, auto v, const auto& base) {
        for (auto* c : {&s.run.embedder, &s.run.scorer, &s.run.generator}) client_setting(*c, n, k, v, base);
      };
      t["embedder." + n] = [n](Settings& s, auto k, auto v, const auto& base) {
        client_setting(s.run.embedder, n, k, v, base);
      };
      t["scorer." + n] = [n](Settings& s, auto k, auto v, const auto& base) {
        client_setting(s.run.scorer, n, k, v, base);
      };
      t["generator." + n] = [n](Settings& s, auto k, auto v, const auto& base) {
        client_setting(s.run.generator, n, k, v, base);
      };
    }
    t["sweep.axis"] = [](Settings& s, auto k, auto v, const auto&) { s.sweep.axis = parsed(k, v, parse_sweep_axis); };
    t["sweep.values"] = [](Settings& s, auto k, auto v, const auto&) { s.sweep.values = parse_list(k, v); };
    t["sweep.records_dir"] = [](Settings& s, auto, auto v, const auto& base) {
      s.sweep.records_dir = parse_path(v, base);
    };
    return t;
  }();
  return table;
}

}  // namespace

ConfigFile parse_config(std::string_view text, std::filesystem::path base_dir) {
  ConfigFile file;
  file.base_dir = std::move(base_dir);
  std::string section;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    auto where = [&] { return "config line " + std::to_string(line_no) + ": "; };
    // Strip comments outside quotes.
    bool quoted = false;
    std::size_t cut = raw.size();
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (raw[i] == '"') quoted = !quoted;
      if (raw[i] == '#' && !quoted) {
        cut = i;
        break;
      }
    }
    const auto line = trim(std::string_view(raw).substr(0, cut));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(Errc::invalid_argument, where() + "unterminated section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (section.empty()) fail(Errc::invalid_argument, where() + "empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) fail(Errc::invalid_argument, where() + "expected key = value");
    const auto name = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    if (name.empty()) fail(Errc::invalid_argument, where() + "missing key");
    if (section.empty()) fail(Errc::invalid_argument, where() + "key '" + std::string(name) + "' outside a section");
    if (!value.empty() && value.front() == '"') {
      if (value.size() < 2 || value.back() != '"') fail(Errc::invalid_argument, where() + "unterminated string");
      value = value.substr(1, value.size() - 2);
    }
    std::string key = section + "." + std::string(name);
    if (!setters().count(key)) fail(Errc::invalid_argument, where() + "unknown key '" + key + "'");
    file.entries.push_back({std::move(key), std::string(value), line_no});
  }
  return file;
}

ConfigFile load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::invalid_argument, "cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str(), path.parent_path());
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

const std::vector<std::string>& known_keys() {
  static const auto keys = [] {
    std::vector<std::string> k;
    for (const auto& [key, setter] : setters()) k.push_back(key);
    return k;
  }();
  return keys;
}

void apply_setting(Settings& settings, std::string_view key, std::string_view value,
                   const std::filesystem::path& base_dir) {
  const auto it = setters().find(key);
  if (it == setters().end()) fail(Errc::invalid_argument, "unknown config key '" + std::string(key) + "'");
  it->second(settings, key, trim(value), base_dir);
}

Settings resolve_settings(const ConfigFile* file, std::string_view env_endpoint,
                          const std::vector<std::pair<std::string, std::string>>& overrides) {
  Settings settings;
  if (file) {
    auto apply = [&](const Entry& e) {
      try {
        apply_setting(settings, e.key, e.value, file->base_dir);
      } catch (const Error& err) {
        throw Error(err.code(), "config line " + std::to_string(e.line) + ": " + err.what());
      }
    };
    for (const auto& e : file->entries) {
      if (e.key.rfind("client.", 0) == 0) apply(e);
    }
    for (const auto& e : file->entries) {
      if (e.key.rfind("client.", 0) != 0) apply(e);
    }
  }
  if (!env_endpoint.empty()) apply_setting(settings, "client.endpoint", env_endpoint);
  for (const auto& [key, value] : overrides) apply_setting(settings, key, value);
  return settings;
}

}  // namespace vicl::cli
