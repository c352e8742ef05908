#pragma once

#include <atomic>
#include <string>

namespace choicealign::http {

struct PostOptions {
  double timeout_seconds = 60.0;
  int max_retries = 3;
  double backoff_base_seconds = 1.0;
  std::string api_key_env;
};

/// POSTs a JSON body and returns the 200 response body. Connection failures,
/// 429 and 5xx are retried with exponential backoff; exhaustion throws
/// Error(kRateLimit) when the last failure was a 429, Error(kTransport)
/// otherwise. Other statuses throw Error(kTransport) at once.
std::string post_json(const std::string& url, const std::string& body, const PostOptions& options,
                      std::atomic<std::size_t>* attempts = nullptr);

}  // namespace choicealign::http
