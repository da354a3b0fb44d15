#pragma once

#include <stdexcept>
#include <string>

#include "swinvftr/precision.hpp"

namespace swinvftr::inline SWINVFTR_PRECISION {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define SWINVFTR_DEFINE_ERROR(Name)          \
  class Name : public Error {                \
   public:                                   \
    using Error::Error;                      \
  }

SWINVFTR_DEFINE_ERROR(ShapeError);
SWINVFTR_DEFINE_ERROR(AxisError);
SWINVFTR_DEFINE_ERROR(ConfigError);
SWINVFTR_DEFINE_ERROR(UnsupportedConfig);
SWINVFTR_DEFINE_ERROR(NumericError);
SWINVFTR_DEFINE_ERROR(ChecksumError);
SWINVFTR_DEFINE_ERROR(FormatError);
SWINVFTR_DEFINE_ERROR(CoverageError);
SWINVFTR_DEFINE_ERROR(ClassError);
SWINVFTR_DEFINE_ERROR(OptimizerError);
SWINVFTR_DEFINE_ERROR(IoError);

#undef SWINVFTR_DEFINE_ERROR

}  // namespace swinvftr
