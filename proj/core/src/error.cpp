#include "comve/error.hpp"

namespace comve {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kParse: return "parse error";
    case ErrorKind::kConsistency: return "consistency error";
    case ErrorKind::kValue: return "value error";
    case ErrorKind::kArgument: return "argument error";
    case ErrorKind::kResolution: return "resolution error";
    case ErrorKind::kEncoding: return "encoding error";
    case ErrorKind::kConfiguration: return "configuration error";
    case ErrorKind::kData: return "data error";
    case ErrorKind::kDivergence: return "divergence error";
    case ErrorKind::kIo: return "I/O error";
  }
  return "error";
}

Error::Error(ErrorKind kind, std::string module, const std::string& message)
    : std::runtime_error(message), kind_(kind), module_(std::move(module)) {}

}  // namespace comve
