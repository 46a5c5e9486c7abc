#pragma once

#include <stdexcept>
#include <string>

namespace sdde {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

#define SDDE_DEFINE_ERROR(Name)                                  \
  class Name : public Error {                                    \
   public:                                                       \
    explicit Name(const std::string& what) : Error(#Name ": " + what) {} \
  }

SDDE_DEFINE_ERROR(NonIntegralGrid);
SDDE_DEFINE_ERROR(DimensionMismatch);
SDDE_DEFINE_ERROR(NonFiniteValue);
SDDE_DEFINE_ERROR(OutOfDomain);
SDDE_DEFINE_ERROR(MisalignedWindow);
SDDE_DEFINE_ERROR(ZeroFunction);
SDDE_DEFINE_ERROR(NonConvergence);
SDDE_DEFINE_ERROR(EmptySetParameters);
SDDE_DEFINE_ERROR(OutOfRange);
SDDE_DEFINE_ERROR(NoCrossing);
SDDE_DEFINE_ERROR(GBoundsViolated);
SDDE_DEFINE_ERROR(MaxIterExceeded);
SDDE_DEFINE_ERROR(ConfigError);

#undef SDDE_DEFINE_ERROR

}  // namespace sdde
