#include "cogscreen/net.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "cogscreen/error.hpp"
#include "cogscreen/rng.hpp"

namespace cogscreen::net {
namespace {

std::atomic<NetworkPolicy> g_policy{NetworkPolicy::Forbidden};

bool retryable(int status) { return status == 0 || status == 429 || status >= 500; }

}  // namespace

void set_network_policy(NetworkPolicy policy) { g_policy.store(policy); }
NetworkPolicy network_policy() { return g_policy.load(); }

void require_network(std::string_view what) {
  if (network_policy() != NetworkPolicy::Allowed) {
    throw Error(ErrorKind::NetworkForbidden,
                std::string(what) + " needs network access; rerun with --network allow");
  }
}

std::vector<double> backoff_schedule(const RetryPolicy& policy) {
  Rng rng(policy.seed);
  std::vector<double> out;
  for (int k = 1; k < policy.max_attempts; ++k) {
    const double base = std::min(policy.max_delay_s, policy.base_delay_s * std::pow(2.0, k - 1));
    out.push_back(base * (1.0 + policy.jitter * rng.uniform(-1.0, 1.0)));
  }
  return out;
}

Sleeper real_sleeper() {
  return [](double s) { std::this_thread::sleep_for(std::chrono::duration<double>(s)); };
}

UrlParts split_url(std::string_view url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) {
    throw Error(ErrorKind::ConfigError, "URL lacks a scheme: " + std::string(url));
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string_view::npos) return {std::string(url), "/"};
  return {std::string(url.substr(0, path_start)), std::string(url.substr(path_start))};
}

PostResult post_json(const HttpConfig& cfg, const nlohmann::json& body, const Sleeper& sleep) {
  require_network(cfg.url);
  if (cfg.retry.max_attempts < 1) throw Error(ErrorKind::ConfigError, "retry.max_attempts must be at least 1");
  const auto parts = split_url(cfg.url);
  httplib::Headers headers;
  if (!cfg.token_env.empty()) {
    const char* token = std::getenv(cfg.token_env.c_str());
    if (token == nullptr || *token == '\0') {
      throw Error(ErrorKind::ConfigError, "auth token variable " + cfg.token_env + " is not set");
    }
    headers.emplace("Authorization", std::string("Bearer ") + token);
  }
  const auto schedule = backoff_schedule(cfg.retry);
  const auto payload = body.dump();

  PostResult result;
  for (int attempt = 1; attempt <= cfg.retry.max_attempts; ++attempt) {
    httplib::Client client(parts.origin);
    const auto secs = static_cast<time_t>(cfg.timeout_s);
    const auto usecs = static_cast<time_t>((cfg.timeout_s - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    auto res = client.Post(parts.path, headers, payload, "application/json");

    Attempt a;
    a.number = attempt;
    if (!res) {
      a.error = httplib::to_string(res.error());
    } else {
      a.status = res->status;
      if (res->status >= 200 && res->status < 300) {
        result.attempts.push_back(a);
        try {
          result.body = nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::exception& e) {
          throw Error(ErrorKind::SchemaError, cfg.url + ": response is not JSON (" + e.what() + ")");
        }
        return result;
      }
      a.error = "HTTP " + std::to_string(res->status);
    }
    const bool last = attempt == cfg.retry.max_attempts;
    if (!retryable(a.status) || last) {
      result.attempts.push_back(a);
      throw Error(ErrorKind::NetworkError, cfg.url + ": " + a.error + " after " + std::to_string(attempt) +
                                               " attempt(s)");
    }
    a.delay_s = schedule[static_cast<std::size_t>(attempt - 1)];
    spdlog::warn("{}: attempt {} failed ({}); retrying in {:.3f}s", cfg.url, attempt, a.error, a.delay_s);
    result.attempts.push_back(a);
    sleep(a.delay_s);
  }
  throw Error(ErrorKind::NetworkError, cfg.url + ": retry budget exhausted");
}

}  // namespace cogscreen::net
