#include "vicl/conformance.hpp"

#include <cmath>
#include <functional>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "vicl/error.hpp"
#include "vicl/hashing.hpp"
#include "vicl/inference_client.hpp"
#include "vicl/protocol.hpp"

namespace vicl {

namespace {

using json = nlohmann::json;

struct Response {
  int status = 0;
  json body;
  bool parsed = false;
};

class Probe {
 public:
  Probe(const std::string& base_url, std::chrono::milliseconds timeout) : base_url_(base_url), timeout_(timeout) {}

  Response post(const char* path, const std::string& payload) const { return send(path, &payload); }
  Response get(const char* path) const { return send(path, nullptr); }

 private:
  Response send(const char* path, const std::string* payload) const {
    httplib::Client cli(base_url_);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
    cli.set_connection_timeout(secs.count(), 0);
    cli.set_read_timeout(secs.count(), 0);
    auto res = payload ? cli.Post(path, *payload, "application/json") : cli.Get(path);
    Response out;
    if (!res) fail(Errc::transport, std::string(path) + ": " + httplib::to_string(res.error()));
    out.status = res->status;
    try {
      out.body = json::parse(res->body);
      out.parsed = true;
    } catch (const json::exception&) {
    }
    return out;
  }

  std::string base_url_;
  std::chrono::milliseconds timeout_;
};

const std::string kImageA = "conformance-image-a";
const std::string kImageB = "conformance-image-b with different bytes";

void expect(bool condition, const std::string& what) {
  if (!condition) throw std::runtime_error(what);
}

void expect_ok_object(const Response& r) {
  expect(r.status == 200, "status " + std::to_string(r.status) + ", expected 200");
  expect(r.parsed && r.body.is_object(), "response body is not a JSON object");
}

void expect_error_body(const Response& r, bool client_error) {
  if (client_error) {
    expect(r.status >= 400 && r.status < 500, "status " + std::to_string(r.status) + ", expected 4xx");
  } else {
    expect(r.status >= 400, "status " + std::to_string(r.status) + ", expected an error status");
  }
  expect(r.parsed && r.body.is_object() && r.body.contains("error") && r.body.at("error").is_string(),
         "error response lacks {\"error\": str}");
}

std::vector<float> embedding_of(const Response& r) {
  expect_ok_object(r);
  expect(r.body.contains("dim") && r.body.at("dim").is_number_integer(), "missing integer \"dim\"");
  expect(r.body.contains("values") && r.body.at("values").is_array(), "missing array \"values\"");
  const auto dim = r.body.at("dim").get<long long>();
  expect(dim > 0, "dim must be positive");
  std::vector<float> values;
  for (const auto& v : r.body.at("values")) {
    expect(v.is_number(), "non-numeric value");
    expect(std::isfinite(v.get<double>()), "non-finite value");
    values.push_back(v.get<float>());
  }
  expect(values.size() == static_cast<std::size_t>(dim), "values length differs from dim");
  return values;
}

json embed_request(const std::string& bytes) {
  return {{"image_b64", base64_encode(bytes)}, {"model_id", "conformance"}};
}

json mixed_parts() {
  return json::array({{{"type", "text"}, {"text", "Question: What you see in this image? There is a category list: "
                                                  "[cat, dog]. Image: "}},
                      {{"type", "image"}, {"image_b64", base64_encode(kImageA)}},
                      {{"type", "text"}, {"text", ". Answer: "}}});
}

}  // namespace

std::vector<ConformanceCheck> run_conformance(const std::string& base_url, std::chrono::milliseconds timeout) {
  const Probe probe(base_url, timeout);
  std::vector<ConformanceCheck> checks;
  auto check = [&](std::string name, const std::function<void()>& body) {
    ConformanceCheck c{std::move(name), false, {}};
    try {
      body();
      c.passed = true;
    } catch (const std::exception& e) {
      c.detail = e.what();
    }
    checks.push_back(std::move(c));
  };

  check("health", [&] {
    const auto r = probe.get(protocol::kHealthPath);
    expect_ok_object(r);
    expect(r.body.value("status", "") == "ok", "status field is not \"ok\"");
    expect(r.body.contains("models") && r.body.at("models").is_object(), "missing object \"models\"");
  });
  check("embed_image schema", [&] { embedding_of(probe.post(protocol::kEmbedPath, embed_request(kImageA).dump())); });
  check("embed_image determinism", [&] {
    const auto a = embedding_of(probe.post(protocol::kEmbedPath, embed_request(kImageA).dump()));
    const auto b = embedding_of(probe.post(protocol::kEmbedPath, embed_request(kImageA).dump()));
    expect(a == b, "same bytes produced different vectors");
  });
  check("embed_image fixed dimension", [&] {
    const auto a = embedding_of(probe.post(protocol::kEmbedPath, embed_request(kImageA).dump()));
    const auto b = embedding_of(probe.post(protocol::kEmbedPath, embed_request(kImageB).dump()));
    expect(a.size() == b.size(), "dimension changed between images");
  });
  check("generate schema (text + image)", [&] {
    const auto r = probe.post(protocol::kGeneratePath, json{{"parts", mixed_parts()}, {"model_id", "conformance"}}.dump());
    expect_ok_object(r);
    expect(r.body.contains("text") && r.body.at("text").is_string(), "missing string \"text\"");
    expect(!r.body.at("text").get<std::string>().empty(), "empty generation");
  });
  check("generate schema (text only)", [&] {
    const json parts = json::array({{{"type", "text"}, {"text", "Describe a sunset."}}});
    const auto r = probe.post(protocol::kGeneratePath, json{{"parts", parts}, {"model_id", "conformance"}}.dump());
    expect_ok_object(r);
    expect(r.body.contains("text") && r.body.at("text").is_string(), "missing string \"text\"");
    expect(!r.body.at("text").get<std::string>().empty(), "empty generation");
  });
  check("score schema and determinism", [&] {
    const auto body = json{{"image_b64", base64_encode(kImageA)}, {"text", "a photo"}, {"model_id", "conformance"}}.dump();
    const auto a = probe.post(protocol::kScorePath, body);
    const auto b = probe.post(protocol::kScorePath, body);
    for (const auto* r : {&a, &b}) {
      expect_ok_object(*r);
      expect(r->body.contains("score") && r->body.at("score").is_number(), "missing numeric \"score\"");
      expect(std::isfinite(r->body.at("score").get<double>()), "score is not finite");
    }
    expect(a.body.at("score") == b.body.at("score"), "same pair scored differently");
  });
  check("trace bundle or unsupported", [&] {
    const auto r = probe.post(protocol::kTracePath,
                              json{{"parts", mixed_parts()}, {"target", "cat"}, {"model_id", "conformance"}}.dump());
    if (r.status == 200) {
      expect(r.parsed, "trace body is not JSON");
      TraceBundle bundle;
      try {
        bundle = r.body.get<TraceBundle>();
      } catch (const json::exception& e) {
        throw std::runtime_error(std::string("trace schema: ") + e.what());
      }
      bundle.validate();
    } else {
      expect_error_body(r, false);
      expect(r.body.at("error").get<std::string>().rfind("unsupported", 0) == 0,
             "non-200 trace response must be an \"unsupported\" error");
    }
  });
  check("error: malformed JSON body", [&] { expect_error_body(probe.post(protocol::kEmbedPath, "{not json"), true); });
  check("error: missing field", [&] {
    expect_error_body(probe.post(protocol::kScorePath, json{{"text", "x"}}.dump()), true);
  });
  check("error: unknown part type", [&] {
    const json parts = json::array({{{"type", "audio"}, {"data", "x"}}});
    expect_error_body(probe.post(protocol::kGeneratePath, json{{"parts", parts}, {"model_id", "conformance"}}.dump()), true);
  });
  check("error: empty image", [&] {
    expect_error_body(probe.post(protocol::kEmbedPath, embed_request("").dump()), true);
  });
  return checks;
}

bool all_passed(const std::vector<ConformanceCheck>& checks) noexcept {
  for (const auto& c : checks) {
    if (!c.passed) return false;
  }
  return !checks.empty();
}

}  // namespace vicl
