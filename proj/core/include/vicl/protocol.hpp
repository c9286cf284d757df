#pragma once

// JSON wire format shared by the HTTP client, the mock server and the
// conformance suite. Images travel inline as base64.

#include <string>

#include <nlohmann/json.hpp>

#include "vicl/error.hpp"
#include "vicl/inference_client.hpp"

namespace vicl::protocol {

inline constexpr const char* kEmbedPath = "/v1/embed_image";
inline constexpr const char* kGeneratePath = "/v1/generate";
inline constexpr const char* kScorePath = "/v1/score";
inline constexpr const char* kTracePath = "/v1/trace";
inline constexpr const char* kHealthPath = "/v1/health";

/// [{"type":"text","text":...} | {"type":"image","image_b64":...}]
nlohmann::json encode_parts(const Prompt& prompt);
/// Throws Error(Errc::data) on schema violations.
Prompt decode_parts(const nlohmann::json& parts);

nlohmann::json error_body(const std::string& message);

/// HTTP status a server should answer with for an engine error.
int status_for(const Error& error) noexcept;

}  // namespace vicl::protocol
