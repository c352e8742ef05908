#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace choicealign {

/// Failure category. The CLI maps these onto its exit-code taxonomy.
enum class ErrorKind {
  kUsage,        // bad arguments or configuration
  kData,         // malformed or unusable input data
  kConvergence,  // an estimator could not produce a usable fit
  kTransport,    // network failure talking to an agent or embedder
  kRateLimit,    // endpoint kept answering 429 after all retries
  kParse,        // agent output could not be parsed
};

std::string_view error_kind_name(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void throw_data(const std::string& message);
[[noreturn]] void throw_usage(const std::string& message);

}  // namespace choicealign
