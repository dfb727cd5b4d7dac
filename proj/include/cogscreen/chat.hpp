#pragma once

#include <chrono>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cogscreen/net.hpp"

namespace cogscreen::chat {

struct Message {
  std::string role;  // system | user | assistant
  std::string content;
};

struct Sampling {
  double temperature = 1.0;
  std::optional<double> top_p;  // nullopt disables
  std::optional<int> top_k;
};

struct ChatRequest {
  std::string model;
  std::vector<Message> messages;
  Sampling sampling;
  std::optional<int> max_tokens;
};

struct ChatResponse {
  std::string content;
  double latency_s = 0.0;
  int attempts = 1;
};

class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual ChatResponse complete(const ChatRequest& request) = 0;
};

// Blocking token bucket; rate is tokens per second.
class TokenBucket {
 public:
  using Clock = std::function<double()>;  // seconds, monotonic

  TokenBucket(double rate, double burst, Clock clock = {}, net::Sleeper sleep = {});
  // Returns the time spent waiting.
  double acquire();

 private:
  double rate_;
  double burst_;
  double tokens_;
  double last_;
  Clock clock_;
  net::Sleeper sleep_;
  std::mutex mutex_;
};

// Which sampling knobs a provider accepts on the wire.
struct ProviderAdapter {
  std::string name;
  bool supports_top_p = true;
  bool supports_top_k = true;
};

ProviderAdapter adapter_for(const std::string& provider);

// OpenAI-compatible wire body; unsupported knobs are dropped with a warning.
nlohmann::json request_body(const ChatRequest& request, const ProviderAdapter& adapter);
// Reads choices[0].message.content; throws SchemaError.
std::string response_content(const nlohmann::json& body);

struct HttpChatConfig {
  net::HttpConfig http;
  ProviderAdapter adapter;
  double requests_per_second = 0.0;  // 0 disables rate limiting
  double burst = 1.0;
};

HttpChatConfig http_chat_config_from_json(const nlohmann::json& j);

class HttpChatClient : public ChatClient {
 public:
  explicit HttpChatClient(HttpChatConfig cfg, net::Sleeper sleep = net::real_sleeper());
  ChatResponse complete(const ChatRequest& request) override;

 private:
  HttpChatConfig cfg_;
  net::Sleeper sleep_;
  std::optional<TokenBucket> bucket_;
};

// Replays canned replies in order (cycling); used by tests and dry runs.
class ScriptedChatClient : public ChatClient {
 public:
  explicit ScriptedChatClient(std::vector<std::string> replies) : replies_(std::move(replies)) {}
  ChatResponse complete(const ChatRequest& request) override;
  const std::vector<ChatRequest>& requests() const { return requests_; }

 private:
  std::vector<std::string> replies_;
  std::vector<ChatRequest> requests_;
  std::size_t next_ = 0;
  std::mutex mutex_;
};

}  // namespace cogscreen::chat
