#pragma once

#include <stdexcept>
#include <string>

namespace arm {

// Every failure raised by the library derives from Error so that callers
// (the CLI in particular) can map a category to an exit diagnostic.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* category() const noexcept { return "error"; }
};

#define ARM_DEFINE_ERROR(Name, tag)                       \
  class Name : public Error {                             \
   public:                                                \
    using Error::Error;                                   \
    const char* category() const noexcept override {      \
      return tag;                                         \
    }                                                     \
  }

ARM_DEFINE_ERROR(ConfigError, "configuration");
ARM_DEFINE_ERROR(UsageError, "usage");
ARM_DEFINE_ERROR(ShapeError, "shape");
ARM_DEFINE_ERROR(DomainError, "domain");
ARM_DEFINE_ERROR(ValidationError, "validation");
ARM_DEFINE_ERROR(NotFoundError, "not-found");
ARM_DEFINE_ERROR(ConflictError, "conflict");
ARM_DEFINE_ERROR(StorageError, "storage");
ARM_DEFINE_ERROR(TrainingError, "training");
ARM_DEFINE_ERROR(LeaseError, "lease");
ARM_DEFINE_ERROR(InconsistentLabelsError, "inconsistent-labels");

#undef ARM_DEFINE_ERROR

}  // namespace arm
