#include "vicl/protocol.hpp"

#include "vicl/error.hpp"
#include "vicl/hashing.hpp"

namespace vicl::protocol {

nlohmann::json encode_parts(const Prompt& prompt) {
  nlohmann::json parts = nlohmann::json::array();
  for (const auto& part : prompt.parts) {
    if (const auto* t = std::get_if<TextPart>(&part)) {
      parts.push_back({{"type", "text"}, {"text", t->text}});
    } else {
      parts.push_back({{"type", "image"}, {"image_b64", base64_encode(std::get<ImagePart>(part).image.bytes())}});
    }
  }
  return parts;
}

Prompt decode_parts(const nlohmann::json& parts) {
  if (!parts.is_array()) fail(Errc::data, "\"parts\" must be an array");
  Prompt prompt;
  for (const auto& part : parts) {
    if (!part.is_object() || !part.contains("type") || !part.at("type").is_string()) {
      fail(Errc::data, "prompt part must be an object with a string \"type\"");
    }
    const auto type = part.at("type").get<std::string>();
    if (type == "text") {
      if (!part.contains("text") || !part.at("text").is_string()) fail(Errc::data, "text part lacks \"text\"");
      prompt.parts.emplace_back(TextPart{part.at("text").get<std::string>()});
    } else if (type == "image") {
      if (!part.contains("image_b64") || !part.at("image_b64").is_string()) {
        fail(Errc::data, "image part lacks \"image_b64\"");
      }
      prompt.parts.emplace_back(ImagePart{ImageRef::from_bytes(base64_decode(part.at("image_b64").get<std::string>()))});
    } else {
      fail(Errc::data, "unknown prompt part type '" + type + "'");
    }
  }
  return prompt;
}

nlohmann::json error_body(const std::string& message) { return nlohmann::json{{"error", message}}; }

int status_for(const Error& error) noexcept {
  switch (error.code()) {
    case Errc::unsupported: return 501;
    case Errc::transport: return 503;
    default: return 400;
  }
}

}  // namespace vicl::protocol
