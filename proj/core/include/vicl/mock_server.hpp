#pragma once

#include <atomic>
#include <memory>
#include <string>
#include <thread>

#include "vicl/inference_client.hpp"

namespace vicl {

/// Serves any InferenceClient (normally the mock) over the HTTP protocol.
class InferenceServer {
 public:
  explicit InferenceServer(std::shared_ptr<const InferenceClient> backend);
  ~InferenceServer();
  InferenceServer(const InferenceServer&) = delete;
  InferenceServer& operator=(const InferenceServer&) = delete;

  /// Binds host:port (port 0 picks a free port) and returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves on a background thread until stop().
  void start();
  /// Serves on the calling thread until stop() is called from elsewhere.
  void listen();
  void stop();

  /// The next `count` requests to model endpoints fail with `status` before
  /// reaching the backend. Used to exercise client retries.
  void inject_failures(std::size_t count, int status);
  std::size_t backend_calls() const noexcept { return backend_calls_.load(); }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::thread thread_;
  std::atomic<std::size_t> backend_calls_{0};
};

}  // namespace vicl
