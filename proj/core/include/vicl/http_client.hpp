#pragma once

#include <atomic>
#include <memory>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "vicl/inference_client.hpp"

namespace vicl {

/// Client for the HTTP/JSON inference protocol. 4xx responses are permanent
/// failures; 5xx responses and connection errors are retried up to
/// config.retries times. A response carrying an "unsupported" error maps to
/// Errc::unsupported and is never retried.
class HttpClient final : public InferenceClient {
 public:
  explicit HttpClient(ClientConfig config);
  ~HttpClient() override;

  const std::string& model_id() const override { return config_.model_id; }
  EmbeddingVector embed_image(std::string_view image_bytes) const override;
  std::string generate(const Prompt& prompt) const override;
  double score_image_text(std::string_view image_bytes, std::string_view text) const override;
  TraceBundle fetch_trace(const Prompt& prompt, std::string_view target_answer) const override;
  std::size_t max_in_flight() const noexcept override { return config_.max_in_flight; }

  /// Requests sent so far, retries included.
  std::size_t requests_sent() const noexcept { return requests_sent_.load(); }

 private:
  nlohmann::json post(const char* path, const nlohmann::json& body) const;

  struct Transport;
  ClientConfig config_;
  std::unique_ptr<Transport> transport_;
  mutable std::atomic<std::size_t> dim_{0};
  mutable std::atomic<std::size_t> requests_sent_{0};
};

}  // namespace vicl
