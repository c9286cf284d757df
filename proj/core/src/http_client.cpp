#include "vicl/http_client.hpp"

#include <cmath>
#include <semaphore>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "vicl/error.hpp"
#include "vicl/mock_client.hpp"
#include "vicl/protocol.hpp"

namespace vicl {

namespace {

constexpr std::ptrdiff_t kMaxInFlight = 1024;

bool starts_with(std::string_view s, std::string_view prefix) { return s.substr(0, prefix.size()) == prefix; }

std::string error_message(const std::string& body) {
  try {
    auto j = nlohmann::json::parse(body);
    if (j.is_object() && j.contains("error") && j.at("error").is_string()) return j.at("error").get<std::string>();
  } catch (const nlohmann::json::exception&) {
  }
  return body.substr(0, 200);
}

[[noreturn]] void bad_response(const char* path, const std::string& what) {
  fail(Errc::permanent, std::string("malformed response from ") + path + ": " + what);
}

}  // namespace

void ClientConfig::validate() const {
  if (model_id.empty()) fail(Errc::invalid_argument, "client model_id must be non-empty");
  if (max_in_flight == 0 || max_in_flight > static_cast<std::size_t>(kMaxInFlight)) {
    fail(Errc::invalid_argument, "client max_in_flight must be in [1, 1024]");
  }
  if (timeout.count() <= 0) fail(Errc::invalid_argument, "client timeout must be positive");
  if (is_mock_endpoint(endpoint)) {
    parse_mock_modes(endpoint);
  } else if (!starts_with(endpoint, "http://")) {
    fail(Errc::invalid_argument, "client endpoint must be http://host:port or mock:<mode>, got '" + endpoint + "'");
  }
}

std::shared_ptr<InferenceClient> make_client(const ClientConfig& config) {
  config.validate();
  if (is_mock_endpoint(config.endpoint)) {
    MockOptions options;
    options.modes = parse_mock_modes(config.endpoint);
    options.model_id = config.model_id;
    options.dim = config.mock_dim;
    options.max_in_flight = config.max_in_flight;
    if (options.modes.scripted && !config.script_path.empty()) options.script = MockScript::load(config.script_path);
    return std::make_shared<MockClient>(std::move(options));
  }
  return std::make_shared<HttpClient>(config);
}

// ---------------------------------------------------------------------------

struct HttpClient::Transport {
  explicit Transport(std::size_t slots) : in_flight(static_cast<std::ptrdiff_t>(slots)) {}
  std::counting_semaphore<kMaxInFlight> in_flight;
};

HttpClient::HttpClient(ClientConfig config) : config_(std::move(config)) {
  config_.validate();
  if (is_mock_endpoint(config_.endpoint)) fail(Errc::invalid_argument, "HttpClient needs an http:// endpoint");
  transport_ = std::make_unique<Transport>(config_.max_in_flight);
}

HttpClient::~HttpClient() = default;

nlohmann::json HttpClient::post(const char* path, const nlohmann::json& body) const {
  const std::string payload = body.dump();
  std::string last_error;
  transport_->in_flight.acquire();
  struct Release {
    Transport* t;
    ~Release() { t->in_flight.release(); }
  } release{transport_.get()};

  for (std::size_t attempt = 0; attempt <= config_.retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(20) * (1 << std::min<std::size_t>(attempt, 6)));
    httplib::Client cli(config_.endpoint);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
    cli.set_connection_timeout(secs.count(), usecs.count());
    cli.set_read_timeout(secs.count(), usecs.count());
    cli.set_write_timeout(secs.count(), usecs.count());
    ++requests_sent_;
    auto res = cli.Post(path, payload, "application/json");
    if (!res) {
      last_error = std::string(path) + ": " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 200) {
      try {
        return nlohmann::json::parse(res->body);
      } catch (const nlohmann::json::exception& e) {
        bad_response(path, e.what());
      }
    }
    const std::string message = error_message(res->body);
    if (res->status == 501 || starts_with(message, "unsupported")) {
      fail(Errc::unsupported, std::string(path) + ": " + message);
    }
    if (res->status >= 400 && res->status < 500) {
      fail(Errc::permanent, std::string(path) + " returned " + std::to_string(res->status) + ": " + message);
    }
    last_error = std::string(path) + " returned " + std::to_string(res->status) + ": " + message;
  }
  fail(Errc::transport, last_error + " (after " + std::to_string(config_.retries + 1) + " attempts)");
}

EmbeddingVector HttpClient::embed_image(std::string_view image_bytes) const {
  if (image_bytes.empty()) fail(Errc::invalid_argument, "embed_image: empty image");
  const auto res = post(protocol::kEmbedPath,
                        {{"image_b64", base64_encode(image_bytes)}, {"model_id", config_.model_id}});
  if (!res.is_object() || !res.contains("dim") || !res.at("dim").is_number_integer() || !res.contains("values") ||
      !res.at("values").is_array()) {
    bad_response(protocol::kEmbedPath, "expected {\"dim\": int, \"values\": [float]}");
  }
  const auto dim = res.at("dim").get<std::size_t>();
  std::vector<float> values;
  values.reserve(dim);
  for (const auto& v : res.at("values")) {
    if (!v.is_number()) bad_response(protocol::kEmbedPath, "non-numeric embedding value");
    values.push_back(v.get<float>());
  }
  if (values.size() != dim || dim == 0) bad_response(protocol::kEmbedPath, "dim disagrees with value count");
  std::size_t expected = 0;
  if (!dim_.compare_exchange_strong(expected, dim) && expected != dim) {
    fail(Errc::dimension_mismatch, "embedding dimension drifted from " + std::to_string(expected) + " to " +
                                       std::to_string(dim));
  }
  try {
    return EmbeddingVector(std::move(values));
  } catch (const Error& e) {
    bad_response(protocol::kEmbedPath, e.what());
  }
}

std::string HttpClient::generate(const Prompt& prompt) const {
  if (prompt.empty()) fail(Errc::invalid_argument, "generate: empty prompt");
  const auto res = post(protocol::kGeneratePath,
                        {{"parts", protocol::encode_parts(prompt)}, {"model_id", config_.model_id}});
  if (!res.is_object() || !res.contains("text") || !res.at("text").is_string()) {
    bad_response(protocol::kGeneratePath, "expected {\"text\": str}");
  }
  auto text = res.at("text").get<std::string>();
  if (text.empty()) fail(Errc::generation, "model returned an empty generation");
  return text;
}

double HttpClient::score_image_text(std::string_view image_bytes, std::string_view text) const {
  if (image_bytes.empty() || text.empty()) fail(Errc::invalid_argument, "score: image and text must be non-empty");
  const auto res = post(protocol::kScorePath, {{"image_b64", base64_encode(image_bytes)},
                                               {"text", std::string(text)},
                                               {"model_id", config_.model_id}});
  if (!res.is_object() || !res.contains("score") || !res.at("score").is_number()) {
    bad_response(protocol::kScorePath, "expected {\"score\": float}");
  }
  const double score = res.at("score").get<double>();
  if (!std::isfinite(score)) bad_response(protocol::kScorePath, "score is not finite");
  return score;
}

TraceBundle HttpClient::fetch_trace(const Prompt& prompt, std::string_view target_answer) const {
  const auto res = post(protocol::kTracePath, {{"parts", protocol::encode_parts(prompt)},
                                               {"target", std::string(target_answer)},
                                               {"model_id", config_.model_id}});
  TraceBundle bundle;
  try {
    bundle = res.get<TraceBundle>();
  } catch (const nlohmann::json::exception& e) {
    bad_response(protocol::kTracePath, e.what());
  }
  bundle.validate();
  return bundle;
}

}  // namespace vicl
