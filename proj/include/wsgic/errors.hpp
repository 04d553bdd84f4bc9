#pragma once

#include <stdexcept>
#include <string>

namespace wsgic {

// Every failure raised by the library derives from Error so callers can
// separate library faults from std::bad_alloc and friends.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define WSGIC_DEFINE_ERROR(Name)       \
  class Name : public Error {          \
   public:                             \
    using Error::Error;                \
  }

WSGIC_DEFINE_ERROR(ShapeMismatch);
WSGIC_DEFINE_ERROR(NonFiniteValue);
WSGIC_DEFINE_ERROR(BadDimensions);
WSGIC_DEFINE_ERROR(UnknownToken);
WSGIC_DEFINE_ERROR(DegenerateMap);
WSGIC_DEFINE_ERROR(EmptyMask);
WSGIC_DEFINE_ERROR(NoRecords);
WSGIC_DEFINE_ERROR(EmptyCorpus);
WSGIC_DEFINE_ERROR(NoPositives);
WSGIC_DEFINE_ERROR(LengthMismatch);
WSGIC_DEFINE_ERROR(InfeasiblePlacement);
WSGIC_DEFINE_ERROR(NonFiniteLoss);
WSGIC_DEFINE_ERROR(MissingCheckpoint);
WSGIC_DEFINE_ERROR(IoError);
WSGIC_DEFINE_ERROR(ConfigError);

#undef WSGIC_DEFINE_ERROR

}  // namespace wsgic
