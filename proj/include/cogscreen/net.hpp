#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace cogscreen::net {

enum class NetworkPolicy { Forbidden, Allowed };

// Process-wide switch; remote calls throw NetworkForbidden unless allowed.
void set_network_policy(NetworkPolicy policy);
NetworkPolicy network_policy();
void require_network(std::string_view what);

struct RetryPolicy {
  int max_attempts = 4;
  double base_delay_s = 0.5;
  double max_delay_s = 8.0;
  double jitter = 0.25;  // fraction of the delay, drawn uniformly in [-j, +j]
  std::uint64_t seed = 0;
};

// Delay before retry k (k = 1 .. max_attempts-1); deterministic per seed.
std::vector<double> backoff_schedule(const RetryPolicy& policy);

struct HttpConfig {
  std::string url;        // scheme://host[:port]/path
  std::string token_env;  // bearer token source; empty means no auth header
  double timeout_s = 30.0;
  RetryPolicy retry;
};

struct Attempt {
  int number = 0;      // 1-based
  int status = 0;      // 0 when the request never got a response
  double delay_s = 0;  // wait applied after this attempt failed
  std::string error;
};

// Waits between retries; replaceable so tests do not sleep.
using Sleeper = std::function<void(double seconds)>;
Sleeper real_sleeper();

struct PostResult {
  nlohmann::json body;
  std::vector<Attempt> attempts;
};

// POSTs JSON, retrying network errors, 429 and 5xx with exponential backoff.
// Other 4xx responses fail immediately. Throws NetworkError when the budget
// is spent or the body is not JSON.
PostResult post_json(const HttpConfig& cfg, const nlohmann::json& body, const Sleeper& sleep = real_sleeper());

struct UrlParts {
  std::string origin;  // scheme://host[:port]
  std::string path;
};
UrlParts split_url(std::string_view url);

}  // namespace cogscreen::net
