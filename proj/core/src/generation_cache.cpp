#include <atomic>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "vicl/demo_store.hpp"
#include "vicl/error.hpp"
#include "vicl/hashing.hpp"

namespace vicl {

GenerationCache::GenerationCache(std::filesystem::path directory) : directory_(std::move(directory)) {
  std::error_code ec;
  std::filesystem::create_directories(*directory_, ec);
  if (ec) fail(Errc::data, "cannot create cache directory '" + directory_->string() + "': " + ec.message());
}

std::string GenerationCache::key(std::string_view image_bytes, std::string_view prompt_text,
                                 std::string_view model_id) {
  return to_hex(Sha256().update(image_bytes).update_byte(0).update(prompt_text).update_byte(0).update(model_id).finish());
}

std::optional<std::string> GenerationCache::get(const std::string& key) const {
  {
    std::lock_guard lock(mutex_);
    if (auto it = entries_.find(key); it != entries_.end()) return it->second;
  }
  if (!directory_) return std::nullopt;
  std::ifstream in(*directory_ / key, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string text = std::move(ss).str();
  if (text.empty()) return std::nullopt;
  std::lock_guard lock(mutex_);
  return entries_.emplace(key, std::move(text)).first->second;
}

void GenerationCache::persist(const std::string& key, const std::string& text) const {
  if (!directory_) return;
  static std::atomic<std::uint64_t> counter{0};
  const auto tmp = *directory_ / (key + ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter++));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::data, "cannot write cache entry '" + tmp.string() + "'");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) fail(Errc::data, "failed writing cache entry '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, *directory_ / key);
}

std::string GenerationCache::get_or_generate(std::string_view image_bytes, std::string_view prompt_text,
                                             std::string_view model_id,
                                             const std::function<std::string()>& generate) {
  const std::string k = key(image_bytes, prompt_text, model_id);
  if (auto hit = get(k)) return *hit;

  std::promise<std::string> promise;
  std::shared_future<std::string> pending;
  bool owner = false;
  {
    std::lock_guard lock(mutex_);
    if (auto it = entries_.find(k); it != entries_.end()) return it->second;
    if (auto it = in_flight_.find(k); it != in_flight_.end()) {
      pending = it->second;
    } else {
      pending = promise.get_future().share();
      in_flight_.emplace(k, pending);
      owner = true;
    }
  }
  if (!owner) return pending.get();

  try {
    std::string text = generate();
    if (text.empty()) fail(Errc::generation, "generator returned empty text");
    persist(k, text);
    {
      std::lock_guard lock(mutex_);
      entries_.emplace(k, text);
      in_flight_.erase(k);
    }
    promise.set_value(text);
    return text;
  } catch (...) {
    {
      std::lock_guard lock(mutex_);
      in_flight_.erase(k);
    }
    promise.set_exception(std::current_exception());
    throw;
  }
}

std::size_t GenerationCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

}  // namespace vicl
