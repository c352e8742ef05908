#include "choicealign/error.hpp"

namespace choicealign {

std::string_view error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUsage:
      return "usage";
    case ErrorKind::kData:
      return "data";
    case ErrorKind::kConvergence:
      return "convergence";
    case ErrorKind::kTransport:
      return "transport";
    case ErrorKind::kRateLimit:
      return "rate-limit";
    case ErrorKind::kParse:
      return "parse";
  }
  return "unknown";
}

void throw_data(const std::string& message) { throw Error(ErrorKind::kData, message); }

void throw_usage(const std::string& message) { throw Error(ErrorKind::kUsage, message); }

}  // namespace choicealign
