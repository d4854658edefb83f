#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <thread>

#include "hypoloop/clients.hpp"
#include "hypoloop/errors.hpp"
#include "hypoloop/util.hpp"

namespace hypoloop {

using nlohmann::json;

namespace {

// Splits "https://host:port/prefix" into ("https://host:port", "/prefix").
std::pair<std::string, std::string> split_base_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw ConfigError("endpoint base_url must start with http:// or https://: '" + url + "'");
  }
  const std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw ConfigError("unsupported endpoint scheme '" + scheme + "'");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, ""};
  std::string path = url.substr(path_start);
  while (!path.empty() && path.back() == '/') path.pop_back();
  return {url.substr(0, path_start), path};
}

std::string extract_content(const std::string& body) {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::exception& e) {
    throw EndpointError(std::string("endpoint returned invalid JSON: ") + e.what());
  }
  if (doc.contains("error")) {
    throw EndpointError("endpoint reported an error: " + doc["error"].dump());
  }
  if (!doc.contains("choices") || !doc["choices"].is_array() || doc["choices"].empty()) {
    throw EndpointError("endpoint response has no choices");
  }
  const auto& msg = doc["choices"][0].value("message", json::object());
  const auto content = msg.value("content", json());
  if (content.is_string()) return content.get<std::string>();
  if (content.is_array()) {
    std::string text;
    for (const auto& part : content) {
      if (part.is_object() && part.value("type", "") == "text") text += part.value("text", "");
    }
    return text;
  }
  throw EndpointError("endpoint response has no message content");
}

}  // namespace

HttpChatTransport::HttpChatTransport(EndpointConfig config, Sleeper sleeper)
    : config_(std::move(config)), sleeper_(std::move(sleeper)) {
  if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  if (config_.max_attempts < 1) throw ConfigError("endpoint max_attempts must be >= 1");
  std::tie(scheme_host_port_, path_) = split_base_url(config_.base_url);
  if (!config_.auth_env.empty()) {
    const char* token = std::getenv(config_.auth_env.c_str());
    if (token == nullptr || *token == '\0') {
      throw ConfigError("environment variable " + config_.auth_env +
                        " (endpoint auth token) is not set");
    }
    token_ = token;
  }
}

std::string HttpChatTransport::post(const std::string& body) const {
  httplib::Client cli(scheme_host_port_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
  const auto usecs =
      std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
  cli.set_connection_timeout(secs.count(), usecs.count());
  cli.set_read_timeout(secs.count(), usecs.count());
  cli.set_write_timeout(secs.count(), usecs.count());
  httplib::Headers headers;
  if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
  const std::string path = path_ + "/chat/completions";

  std::string last_error;
  for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
    if (attempt > 1) {
      const double scale = std::pow(config_.backoff_factor, attempt - 2);
      sleeper_(std::chrono::milliseconds(
          static_cast<long long>(static_cast<double>(config_.backoff_base.count()) * scale)));
    }
    auto res = cli.Post(path, headers, body, "application/json");
    if (!res) {
      last_error = "transport failure: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 200) return extract_content(res->body);
    last_error = "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200);
    if (res->status == 429 || res->status >= 500) continue;
    throw EndpointError("endpoint rejected request (" + last_error + ")", res->status);
  }
  throw EndpointError("endpoint failed after " + std::to_string(config_.max_attempts) +
                      " attempts (" + last_error + ")");
}

HttpLlmClient::HttpLlmClient(EndpointConfig config, HttpChatTransport::Sleeper sleeper)
    : transport_(std::move(config), std::move(sleeper)) {}

std::string HttpLlmClient::request_body(std::string_view prompt) const {
  const auto& c = transport_.config();
  json body = {
      {"model", c.model},
      {"messages", json::array({{{"role", "user"}, {"content", std::string(prompt)}}})},
      {"temperature", c.temperature},
      {"max_tokens", c.max_tokens},
  };
  return body.dump();
}

std::string HttpLlmClient::complete(const ChatRequest& request) {
  return transport_.post(request_body(request.prompt));
}

std::string_view sniff_image_mime(std::span<const std::byte> image) {
  const auto b = [&](std::size_t i) {
    return i < image.size() ? std::to_integer<unsigned>(image[i]) : 0u;
  };
  if (b(0) == 0x89 && b(1) == 'P' && b(2) == 'N' && b(3) == 'G') return "image/png";
  if (b(0) == 'G' && b(1) == 'I' && b(2) == 'F') return "image/gif";
  if (b(0) == 'R' && b(1) == 'I' && b(2) == 'F' && b(3) == 'F' && b(8) == 'W' && b(9) == 'E') {
    return "image/webp";
  }
  return "image/jpeg";
}

HttpMllmClient::HttpMllmClient(EndpointConfig config, HttpChatTransport::Sleeper sleeper)
    : transport_(std::move(config), std::move(sleeper)) {}

std::string HttpMllmClient::request_body(std::string_view prompt,
                                         std::span<const std::byte> image,
                                         std::string_view image_ref) const {
  const auto& c = transport_.config();
  if (image.empty()) throw DomainError("image '" + std::string(image_ref) + "' has no bytes");
  const std::string url =
      "data:" + std::string(sniff_image_mime(image)) + ";base64," + base64_encode(image);
  json content = json::array({
      {{"type", "image_url"}, {"image_url", {{"url", url}}}},
      {{"type", "text"}, {"text", std::string(prompt)}},
  });
  json body = {
      {"model", c.model},
      {"messages", json::array({{{"role", "user"}, {"content", content}}})},
      {"temperature", c.temperature},
      {"max_tokens", c.max_tokens},
  };
  return body.dump();
}

std::string HttpMllmClient::answer(const VqaRequest& request) {
  return transport_.post(request_body(request.prompt, request.image, request.image_ref));
}

}  // namespace hypoloop
