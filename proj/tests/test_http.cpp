#include <gtest/gtest.h>

#include <thread>

#include "support/test_support.hpp"
#include "vicl/conformance.hpp"
#include "vicl/error.hpp"
#include "vicl/http_client.hpp"
#include "vicl/mock_client.hpp"
#include "vicl/mock_server.hpp"

namespace vicl {
namespace {

class HttpTest : public ::testing::Test {
 protected:
  void start(bool trace = true) {
    MockOptions o;
    o.modes = parse_mock_modes("mock:clustered+echo-label");
    o.trace_enabled = trace;
    backend_ = std::make_shared<MockClient>(o);
    server_ = std::make_unique<InferenceServer>(backend_);
    port_ = server_->bind("127.0.0.1", 0);
    server_->start();
  }
  void TearDown() override {
    if (server_) server_->stop();
  }
  ClientConfig config(std::size_t retries = 2) const {
    ClientConfig c;
    c.endpoint = "http://127.0.0.1:" + std::to_string(port_);
    c.model_id = "mock";
    c.retries = retries;
    c.timeout = std::chrono::milliseconds(5000);
    return c;
  }

  std::shared_ptr<MockClient> backend_;
  std::unique_ptr<InferenceServer> server_;
  int port_ = 0;
};

TEST_F(HttpTest, ResponsesMatchTheInProcessMock) {
  start();
  HttpClient client(config());
  EXPECT_EQ(client.embed_image("class1_abc"), backend_->embed_image("class1_abc"));
  Prompt p;
  p.append_text("Describe ");
  p.append_image(ImageRef::from_bytes("class2_q"));
  EXPECT_EQ(client.generate(p), backend_->generate(p));
  EXPECT_DOUBLE_EQ(client.score_image_text("class1_a", "tagged class1_"), backend_->score_image_text("class1_a", "tagged class1_"));
  EXPECT_EQ(client.fetch_trace(p, "x"), backend_->fetch_trace(p, "x"));
}

TEST_F(HttpTest, RetriesServerErrors) {
  start();
  HttpClient client(config(2));
  server_->inject_failures(2, 503);
  EXPECT_NO_THROW(client.embed_image("img"));
  EXPECT_EQ(client.requests_sent(), 3u);
}

TEST_F(HttpTest, GivesUpAfterRetriesWithTransportError) {
  start();
  HttpClient client(config(1));
  server_->inject_failures(5, 500);
  try {
    client.embed_image("img");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::transport);
  }
  EXPECT_EQ(client.requests_sent(), 2u);
}

TEST_F(HttpTest, ClientErrorsAreNotRetried) {
  start();
  HttpClient client(config(3));
  server_->inject_failures(1, 400);
  try {
    client.embed_image("img");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::permanent);
  }
  EXPECT_EQ(client.requests_sent(), 1u);
}

TEST_F(HttpTest, DisabledTraceIsUnsupported) {
  start(false);
  HttpClient client(config());
  Prompt p;
  p.append_text("x");
  try {
    client.fetch_trace(p, "y");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::unsupported);
  }
  EXPECT_EQ(client.requests_sent(), 1u);
}

TEST_F(HttpTest, ConnectionRefusedIsTransport) {
  start();
  const auto c = config(1);
  server_->stop();
  server_.reset();
  HttpClient client(c);
  try {
    client.embed_image("img");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::transport);
  }
}

TEST_F(HttpTest, ConcurrentRequestsStayCorrect) {
  start();
  auto c = config();
  c.max_in_flight = 3;
  HttpClient client(c);
  std::vector<std::jthread> threads;
  std::atomic<int> mismatches{0};
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&, t] {
      for (int i = 0; i < 10; ++i) {
        const std::string img = "img-" + std::to_string(t) + "-" + std::to_string(i);
        if (!(client.embed_image(img) == backend_->embed_image(img))) ++mismatches;
      }
    });
  }
  threads.clear();
  EXPECT_EQ(mismatches.load(), 0);
}

TEST_F(HttpTest, ConformanceSuitePassesWithAndWithoutTrace) {
  for (bool trace : {true, false}) {
    start(trace);
    const auto checks = run_conformance("http://127.0.0.1:" + std::to_string(port_));
    for (const auto& ch : checks) EXPECT_TRUE(ch.passed) << ch.name << ": " << ch.detail;
    EXPECT_TRUE(all_passed(checks));
    EXPECT_GE(checks.size(), 10u);
    server_->stop();
    server_.reset();
  }
}

}  // namespace
}  // namespace vicl
