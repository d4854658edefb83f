#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>

#include "hypoloop/domain.hpp"

namespace hypoloop {

struct GenerationRequest;

// A single text-only chat turn. `generation` carries the structured request
// the prompt was rendered from; HTTP clients ignore it, mocks read it instead
// of parsing prompt text. `nonce` distinguishes repeated calls with the same
// prompt.
struct ChatRequest {
  std::string prompt;
  const GenerationRequest* generation = nullptr;
  std::uint64_t nonce = 0;
};

class LlmClient {
 public:
  virtual ~LlmClient() = default;
  virtual std::string complete(const ChatRequest& request) = 0;
};

// One image plus the batch VQA prompt. `set` is the (sub)set of hypotheses the
// prompt asks about, in prompt order.
struct VqaRequest {
  std::string_view image_ref;
  std::span<const std::byte> image;
  std::string_view prompt;
  const HypothesisSet* set = nullptr;
};

class MllmClient {
 public:
  virtual ~MllmClient() = default;
  virtual std::string answer(const VqaRequest& request) = 0;
  virtual std::string model_id() const = 0;
};

struct EndpointConfig {
  std::string base_url;  // e.g. http://localhost:23333/v1
  std::string model;
  double temperature = 1.0;
  int max_tokens = 2048;
  std::string auth_env;  // name of the env var holding the bearer token; empty = no auth
  std::chrono::milliseconds timeout{120'000};
  int max_attempts = 3;
  std::chrono::milliseconds backoff_base{1000};
  double backoff_factor = 2.0;
};

// Chat-completions wire protocol over HTTP(S). Transport failures, 429 and
// 5xx responses are retried with exponential backoff; other statuses fail at
// once with EndpointError.
class HttpChatTransport {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  explicit HttpChatTransport(EndpointConfig config, Sleeper sleeper = {});

  // Posts `body` (a chat-completions request) and returns the first choice's
  // message text.
  std::string post(const std::string& body) const;

  const EndpointConfig& config() const { return config_; }
  // Resolved bearer token (empty when auth is disabled).
  const std::string& token() const { return token_; }

 private:
  EndpointConfig config_;
  Sleeper sleeper_;
  std::string token_;
  std::string scheme_host_port_;
  std::string path_;
};

class HttpLlmClient final : public LlmClient {
 public:
  explicit HttpLlmClient(EndpointConfig config, HttpChatTransport::Sleeper sleeper = {});
  std::string complete(const ChatRequest& request) override;

  // Request body for one prompt; exposed for wire-format tests.
  std::string request_body(std::string_view prompt) const;

 private:
  HttpChatTransport transport_;
};

class HttpMllmClient final : public MllmClient {
 public:
  explicit HttpMllmClient(EndpointConfig config, HttpChatTransport::Sleeper sleeper = {});
  std::string answer(const VqaRequest& request) override;
  std::string model_id() const override { return transport_.config().model; }

  std::string request_body(std::string_view prompt, std::span<const std::byte> image,
                           std::string_view image_ref) const;

 private:
  HttpChatTransport transport_;
};

// Guess of the image MIME type from magic bytes; defaults to image/jpeg.
std::string_view sniff_image_mime(std::span<const std::byte> image);

}  // namespace hypoloop
