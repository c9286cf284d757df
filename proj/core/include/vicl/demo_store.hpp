#pragma once

// Dataset manifests, the persistent embedding index, and the content-addressed
// cache of model generations.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <future>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "vicl/inference_client.hpp"
#include "vicl/types.hpp"

namespace vicl {

struct Manifest {
  std::vector<DemonstrationCandidate> candidates;
  std::vector<DemonstrationCandidate> tests;
  LabelSet labels;
};

/// Reads a JSON Lines manifest:
///   {"id": str, "image_path": str, "label": str, "sublabel": str|null, "split": "candidates"|"test"}
/// Relative image paths resolve against the manifest's directory. Labels are
/// collected in first-appearance order (case-insensitive) and each record's
/// question is the task question of `kind`.
Manifest load_manifest(const std::filesystem::path& path, DatasetKind kind = DatasetKind::Emotion);

/// Exact-search embedding store. Entry order is insertion order and is what
/// breaks ties during retrieval.
class EmbeddingIndex {
 public:
  struct Entry {
    std::string id;
    EmbeddingVector vector;
    friend bool operator==(const Entry&, const Entry&) = default;
  };

  EmbeddingIndex() = default;
  explicit EmbeddingIndex(std::size_t dim);

  /// Throws on dimension mismatch or duplicate id.
  void add(std::string id, EmbeddingVector vector);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  const std::vector<Entry>& entries() const noexcept { return entries_; }
  const Entry* find(std::string_view id) const;

  /// Entries whose id passes `keep`, in the original order.
  EmbeddingIndex filtered(const std::function<bool(std::string_view)>& keep) const;

  friend bool operator==(const EmbeddingIndex&, const EmbeddingIndex&) = default;

 private:
  std::size_t dim_ = 0;
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> positions_;
};

/// Embeds every candidate with `client`, keeping input order. The dimension of
/// the first embedding fixes the index dimension.
EmbeddingIndex build_index(const std::vector<DemonstrationCandidate>& candidates, const InferenceClient& client);

/// Binary, little-endian: "VICL", u32 version=1, u32 dim, u64 count, then per
/// entry u32 id length, id bytes, dim float32 values.
void write_index(const EmbeddingIndex& index, const std::filesystem::path& path);
std::string encode_index(const EmbeddingIndex& index);
EmbeddingIndex read_index(const std::filesystem::path& path);
/// Errors: Errc::bad_magic, Errc::bad_version, Errc::truncated, Errc::data
/// (non-finite values, duplicate ids, trailing bytes).
EmbeddingIndex decode_index(std::string_view bytes);

/// Cache of generated text keyed by SHA-256(image bytes || 0x00 || prompt text
/// || 0x00 || model id). With a directory, entries persist as one file per key
/// named by the hex key, written via temp-file + rename.
class GenerationCache {
 public:
  GenerationCache() = default;
  explicit GenerationCache(std::filesystem::path directory);

  static std::string key(std::string_view image_bytes, std::string_view prompt_text, std::string_view model_id);

  std::optional<std::string> get(const std::string& key) const;

  /// Returns the cached text or runs `generate` once per key per process and
  /// stores its result. Empty text or a throwing generator stores nothing.
  std::string get_or_generate(std::string_view image_bytes, std::string_view prompt_text, std::string_view model_id,
                              const std::function<std::string()>& generate);

  std::size_t size() const;
  const std::optional<std::filesystem::path>& directory() const noexcept { return directory_; }

 private:
  void persist(const std::string& key, const std::string& text) const;

  std::optional<std::filesystem::path> directory_;
  mutable std::mutex mutex_;
  mutable std::map<std::string, std::string> entries_;  // also memoizes disk reads
  std::map<std::string, std::shared_future<std::string>> in_flight_;
};

}  // namespace vicl
