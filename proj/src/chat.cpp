#include "cogscreen/chat.hpp"

#include <spdlog/spdlog.h>

#include "cogscreen/error.hpp"
#include "cogscreen/util.hpp"

namespace cogscreen::chat {
namespace {

double steady_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

}  // namespace

TokenBucket::TokenBucket(double rate, double burst, Clock clock, net::Sleeper sleep)
    : rate_(rate), burst_(burst), tokens_(burst), clock_(clock ? std::move(clock) : Clock(steady_seconds)),
      sleep_(sleep ? std::move(sleep) : net::real_sleeper()) {
  if (!(rate > 0.0) || !(burst >= 1.0)) throw Error(ErrorKind::ConfigError, "token bucket needs rate > 0 and burst >= 1");
  last_ = clock_();
}

double TokenBucket::acquire() {
  std::lock_guard<std::mutex> lock(mutex_);
  double waited = 0.0;
  for (;;) {
    const double now = clock_();
    tokens_ = std::min(burst_, tokens_ + (now - last_) * rate_);
    last_ = now;
    if (tokens_ >= 1.0) {
      tokens_ -= 1.0;
      return waited;
    }
    const double wait = (1.0 - tokens_) / rate_;
    sleep_(wait);
    waited += wait;
  }
}

ProviderAdapter adapter_for(const std::string& provider) {
  const auto p = to_lower(provider);
  if (p == "openai" || p == "azure-openai") return {p, true, false};
  return {p.empty() ? "openai-compatible" : p, true, true};
}

nlohmann::json request_body(const ChatRequest& request, const ProviderAdapter& adapter) {
  nlohmann::json body;
  body["model"] = request.model;
  body["messages"] = nlohmann::json::array();
  for (const auto& m : request.messages) body["messages"].push_back({{"role", m.role}, {"content", m.content}});
  body["temperature"] = request.sampling.temperature;
  if (request.sampling.top_p) {
    if (adapter.supports_top_p) body["top_p"] = *request.sampling.top_p;
    else spdlog::warn("provider {} does not accept top_p; omitted", adapter.name);
  }
  if (request.sampling.top_k) {
    if (adapter.supports_top_k) body["top_k"] = *request.sampling.top_k;
    else spdlog::warn("provider {} does not accept top_k; omitted", adapter.name);
  }
  if (request.max_tokens) body["max_tokens"] = *request.max_tokens;
  return body;
}

std::string response_content(const nlohmann::json& body) {
  try {
    const auto& content = body.at("choices").at(0).at("message").at("content");
    if (!content.is_string()) throw Error(ErrorKind::SchemaError, "chat response content is not a string");
    return content.get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::SchemaError, std::string("chat response lacks choices[0].message.content: ") + e.what());
  }
}

HttpChatConfig http_chat_config_from_json(const nlohmann::json& j) {
  HttpChatConfig c;
  c.http.url = j.at("url").get<std::string>();
  c.http.token_env = j.value("token_env", "");
  c.http.timeout_s = j.value("timeout_s", 60.0);
  c.http.retry.max_attempts = j.value("max_attempts", c.http.retry.max_attempts);
  c.http.retry.base_delay_s = j.value("base_delay_s", c.http.retry.base_delay_s);
  c.http.retry.seed = j.value("retry_seed", std::uint64_t{0});
  c.adapter = adapter_for(j.value("provider", std::string("openai-compatible")));
  if (j.contains("supports_top_k")) c.adapter.supports_top_k = j["supports_top_k"].get<bool>();
  if (j.contains("supports_top_p")) c.adapter.supports_top_p = j["supports_top_p"].get<bool>();
  c.requests_per_second = j.value("requests_per_second", 0.0);
  c.burst = j.value("burst", 1.0);
  return c;
}

HttpChatClient::HttpChatClient(HttpChatConfig cfg, net::Sleeper sleep) : cfg_(std::move(cfg)), sleep_(std::move(sleep)) {
  if (cfg_.requests_per_second > 0.0) bucket_.emplace(cfg_.requests_per_second, cfg_.burst, TokenBucket::Clock{}, sleep_);
}

ChatResponse HttpChatClient::complete(const ChatRequest& request) {
  net::require_network("chat completion");
  if (bucket_) bucket_->acquire();
  const auto start = std::chrono::steady_clock::now();
  const auto res = net::post_json(cfg_.http, request_body(request, cfg_.adapter), sleep_);
  ChatResponse out;
  out.content = response_content(res.body);
  out.latency_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out.attempts = static_cast<int>(res.attempts.size());
  return out;
}

ChatResponse ScriptedChatClient::complete(const ChatRequest& request) {
  if (replies_.empty()) throw Error(ErrorKind::InvalidArgument, "scripted client has no replies");
  std::lock_guard<std::mutex> lock(mutex_);
  requests_.push_back(request);
  ChatResponse r;
  r.content = replies_[next_ % replies_.size()];
  ++next_;
  return r;
}

}  // namespace cogscreen::chat
