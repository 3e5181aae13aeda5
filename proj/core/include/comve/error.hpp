#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace comve {

enum class ErrorKind {
  kParse,
  kConsistency,
  kValue,
  kArgument,
  kResolution,
  kEncoding,
  kConfiguration,
  kData,
  kDivergence,
  kIo,
};

std::string_view to_string(ErrorKind kind);

// Every error raised by the library carries the module that raised it, so
// the command-line front end can report "<module>: <cause>".
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string module, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& module() const noexcept { return module_; }

 private:
  ErrorKind kind_;
  std::string module_;
};

#define COMVE_DEFINE_ERROR(Name, Kind)                                   \
  class Name : public Error {                                            \
   public:                                                               \
    Name(std::string module, const std::string& message)                 \
        : Error(ErrorKind::Kind, std::move(module), message) {}           \
  };

COMVE_DEFINE_ERROR(ParseError, kParse)
COMVE_DEFINE_ERROR(ConsistencyError, kConsistency)
COMVE_DEFINE_ERROR(ValueError, kValue)
COMVE_DEFINE_ERROR(ArgumentError, kArgument)
COMVE_DEFINE_ERROR(ResolutionError, kResolution)
COMVE_DEFINE_ERROR(EncodingError, kEncoding)
COMVE_DEFINE_ERROR(ConfigError, kConfiguration)
COMVE_DEFINE_ERROR(DataError, kData)
COMVE_DEFINE_ERROR(DivergenceError, kDivergence)
COMVE_DEFINE_ERROR(IoError, kIo)

#undef COMVE_DEFINE_ERROR

}  // namespace comve
