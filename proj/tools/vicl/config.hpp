#pragma once

// Experiment config files: [section] headers and key = value lines, '#'
// comments, optional double quotes around values.
//
//   [run]     mode demo_count pool_size strategy order budget_tokens
//             image_tokens seed rerank retrieval max_candidates max_tests
//             max_in_flight dataset_kind
//   [data]    manifest index cache_dir output
//   [client]  defaults for [embedder], [scorer] and [generator]:
//             endpoint model_id timeout_ms max_in_flight retries script mock_dim
//   [sweep]   axis values records_dir

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vicl/evaluator.hpp"

namespace vicl::cli {

struct SweepSettings {
  SweepAxis axis = SweepAxis::DemoCount;
  std::vector<std::size_t> values{1, 2, 3, 4};
  std::filesystem::path records_dir;
};

struct Settings {
  RunConfig run;
  SweepSettings sweep;
};

struct Entry {
  std::string key;  // "section.name"
  std::string value;
  std::size_t line = 0;
};

struct ConfigFile {
  std::vector<Entry> entries;
  std::filesystem::path base_dir;  // relative paths resolve here
};

/// Throws Error(Errc::invalid_argument) naming the offending line.
ConfigFile parse_config(std::string_view text, std::filesystem::path base_dir = {});
ConfigFile load_config(const std::filesystem::path& path);

/// Every accepted "section.name" key.
const std::vector<std::string>& known_keys();

/// Applies one key. Unknown keys and malformed values throw
/// Error(Errc::invalid_argument).
void apply_setting(Settings& settings, std::string_view key, std::string_view value,
                   const std::filesystem::path& base_dir = {});

/// File values ([client] first, then the rest in file order), then the
/// endpoint from `env_endpoint` if non-empty, then the overrides in order.
Settings resolve_settings(const ConfigFile* file, std::string_view env_endpoint,
                          const std::vector<std::pair<std::string, std::string>>& overrides);

}  // namespace vicl::cli
