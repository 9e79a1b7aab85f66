#pragma once

#include <stdexcept>
#include <string>

namespace nest {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define NEST_DEFINE_ERROR(Name)                                   \
  class Name : public Error {                                     \
   public:                                                        \
    explicit Name(const std::string& what) : Error(#Name ": " + what) {} \
  }

NEST_DEFINE_ERROR(NonMonotoneTimes);
NEST_DEFINE_ERROR(OutOfWindow);
NEST_DEFINE_ERROR(InvalidArgument);
NEST_DEFINE_ERROR(NonCausal);
NEST_DEFINE_ERROR(InvalidInterval);
NEST_DEFINE_ERROR(NonFiniteIntensity);
NEST_DEFINE_ERROR(DegenerateWindow);
NEST_DEFINE_ERROR(Diverged);
NEST_DEFINE_ERROR(BoundViolated);
NEST_DEFINE_ERROR(CapExceeded);
NEST_DEFINE_ERROR(ParseError);
NEST_DEFINE_ERROR(ConfigError);
NEST_DEFINE_ERROR(MismatchedLattice);
NEST_DEFINE_ERROR(EmptyInput);

#undef NEST_DEFINE_ERROR

}  // namespace nest
