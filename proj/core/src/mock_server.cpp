#include "vicl/mock_server.hpp"

#include <cmath>
#include <mutex>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "vicl/error.hpp"
#include "vicl/protocol.hpp"

namespace vicl {

namespace {

void reply(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

std::string required_string(const nlohmann::json& body, const char* key) {
  if (!body.is_object() || !body.contains(key) || !body.at(key).is_string()) {
    fail(Errc::data, std::string("request lacks string field \"") + key + "\"");
  }
  return body.at(key).get<std::string>();
}

}  // namespace

struct InferenceServer::Impl {
  std::shared_ptr<const InferenceClient> backend;
  httplib::Server server;
  std::mutex fault_mutex;
  std::size_t pending_failures = 0;
  int failure_status = 503;

  bool take_failure(int& status) {
    std::lock_guard lock(fault_mutex);
    if (pending_failures == 0) return false;
    --pending_failures;
    status = failure_status;
    return true;
  }
};

InferenceServer::InferenceServer(std::shared_ptr<const InferenceClient> backend) : impl_(std::make_unique<Impl>()) {
  impl_->backend = std::move(backend);
  auto& srv = impl_->server;

  auto route = [this](auto&& handler) {
    return [this, handler](const httplib::Request& req, httplib::Response& res) {
      int injected = 0;
      if (impl_->take_failure(injected)) {
        reply(res, injected, protocol::error_body("injected failure"));
        return;
      }
      try {
        nlohmann::json body;
        try {
          body = nlohmann::json::parse(req.body);
        } catch (const nlohmann::json::exception& e) {
          fail(Errc::data, std::string("request body is not JSON: ") + e.what());
        }
        ++backend_calls_;
        reply(res, 200, handler(body));
      } catch (const Error& e) {
        reply(res, protocol::status_for(e), protocol::error_body(e.what()));
      } catch (const std::exception& e) {
        reply(res, 500, protocol::error_body(e.what()));
      }
    };
  };

  srv.Post(protocol::kEmbedPath, route([this](const nlohmann::json& body) {
             const auto bytes = base64_decode(required_string(body, "image_b64"));
             const auto v = impl_->backend->embed_image(bytes);
             return nlohmann::json{{"dim", v.dim()},
                                   {"values", std::vector<float>(v.values().begin(), v.values().end())}};
           }));
  srv.Post(protocol::kGeneratePath, route([this](const nlohmann::json& body) {
             if (!body.is_object() || !body.contains("parts")) fail(Errc::data, "request lacks \"parts\"");
             return nlohmann::json{{"text", impl_->backend->generate(protocol::decode_parts(body.at("parts")))}};
           }));
  srv.Post(protocol::kScorePath, route([this](const nlohmann::json& body) {
             const auto bytes = base64_decode(required_string(body, "image_b64"));
             return nlohmann::json{{"score", impl_->backend->score_image_text(bytes, required_string(body, "text"))}};
           }));
  srv.Post(protocol::kTracePath, route([this](const nlohmann::json& body) {
             if (!body.is_object() || !body.contains("parts")) fail(Errc::data, "request lacks \"parts\"");
             const auto prompt = protocol::decode_parts(body.at("parts"));
             return nlohmann::json(impl_->backend->fetch_trace(prompt, required_string(body, "target")));
           }));
  srv.Get(protocol::kHealthPath, [this](const httplib::Request&, httplib::Response& res) {
    reply(res, 200, {{"status", "ok"}, {"models", {{"model_id", impl_->backend->model_id()}}}});
  });
}

InferenceServer::~InferenceServer() { stop(); }

int InferenceServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) fail(Errc::transport, "cannot bind " + host);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port)) fail(Errc::transport, "cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void InferenceServer::start() {
  thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void InferenceServer::listen() { impl_->server.listen_after_bind(); }

void InferenceServer::stop() {
  impl_->server.stop();
  if (thread_.joinable()) thread_.join();
}

void InferenceServer::inject_failures(std::size_t count, int status) {
  std::lock_guard lock(impl_->fault_mutex);
  impl_->pending_failures = count;
  impl_->failure_status = status;
}

}  // namespace vicl
