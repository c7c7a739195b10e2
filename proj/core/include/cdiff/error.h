#pragma once

#include <stdexcept>
#include <string>

namespace cdiff {

// Every failure the library raises derives from Error. The kind drives the
// CLI exit code (usage 2, validation/config 3, numeric 4).
enum class ErrorKind {
  kDimension,
  kUsage,
  kNumeric,
  kConfig,
  kIndex,
  kParse,
  kSampling,
  kIo,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

#define CDIFF_DEFINE_ERROR(Name, Kind)                                   \
  class Name : public Error {                                            \
   public:                                                               \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  };

CDIFF_DEFINE_ERROR(DimensionError, kDimension)
CDIFF_DEFINE_ERROR(UsageError, kUsage)
CDIFF_DEFINE_ERROR(NumericError, kNumeric)
CDIFF_DEFINE_ERROR(ConfigError, kConfig)
CDIFF_DEFINE_ERROR(IndexError, kIndex)
CDIFF_DEFINE_ERROR(ParseError, kParse)
CDIFF_DEFINE_ERROR(SamplingError, kSampling)
CDIFF_DEFINE_ERROR(IoError, kIo)

#undef CDIFF_DEFINE_ERROR

inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUsage: return 2;
    case ErrorKind::kNumeric: return 4;
    default: return 3;
  }
}

}  // namespace cdiff
