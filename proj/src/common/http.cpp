#include "http.hpp"

#include <cmath>
#include <cstdlib>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>

#include "choicealign/error.hpp"

namespace choicealign::http {
namespace {

struct Url {
  std::string base;  // scheme://host[:port]
  std::string path;
};

Url split_url(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw_usage(fmt::format("endpoint '{}' lacks a scheme", url));
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

}  // namespace

std::string post_json(const std::string& endpoint, const std::string& body, const PostOptions& options,
                      std::atomic<std::size_t>* attempts) {
  const auto url = split_url(endpoint);
  httplib::Headers headers;
  if (const char* key = options.api_key_env.empty() ? nullptr : std::getenv(options.api_key_env.c_str());
      key && *key) {
    headers.emplace("Authorization", fmt::format("Bearer {}", key));
  }
  const auto secs = static_cast<time_t>(std::floor(options.timeout_seconds));
  const auto usecs = static_cast<time_t>((options.timeout_seconds - static_cast<double>(secs)) * 1e6);

  bool rate_limited = false;
  std::string last_error;
  for (int attempt = 0; attempt <= options.max_retries; ++attempt) {
    if (attempt > 0) {
      const double wait = options.backoff_base_seconds * std::pow(2.0, attempt - 1);
      std::this_thread::sleep_for(std::chrono::duration<double>(wait));
    }
    if (attempts) ++*attempts;
    httplib::Client client(url.base);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    const auto res = client.Post(url.path, headers, body, "application/json");
    if (!res) {
      rate_limited = false;
      last_error = fmt::format("request failed: {}", httplib::to_string(res.error()));
      continue;
    }
    if (res->status == 200) return res->body;
    if (res->status == 429) {
      rate_limited = true;
      last_error = "HTTP 429 Too Many Requests";
      continue;
    }
    if (res->status >= 500) {
      rate_limited = false;
      last_error = fmt::format("HTTP {}", res->status);
      continue;
    }
    throw Error(ErrorKind::kTransport,
                fmt::format("HTTP {} from {}: {}", res->status, endpoint, res->body.substr(0, 200)));
  }
  throw Error(rate_limited ? ErrorKind::kRateLimit : ErrorKind::kTransport,
              fmt::format("{} after {} attempt(s) to {}", last_error, options.max_retries + 1, endpoint));
}

}  // namespace choicealign::http
