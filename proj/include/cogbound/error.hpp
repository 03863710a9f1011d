#pragma once

#include <stdexcept>
#include <string>

namespace cogbound {

/// Base of every error raised by the library. `code()` is a stable,
/// machine-readable identifier used by the CLI error JSON.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

#define COGBOUND_DEFINE_ERROR(Name)                                   \
  class Name : public Error {                                         \
   public:                                                            \
    explicit Name(const std::string& message) : Error(#Name, message) {} \
  }

COGBOUND_DEFINE_ERROR(InvalidInput);
COGBOUND_DEFINE_ERROR(InvalidModel);
COGBOUND_DEFINE_ERROR(InconsistentEvidence);
COGBOUND_DEFINE_ERROR(InvalidLayout);
COGBOUND_DEFINE_ERROR(CorruptedMemoryContradiction);
COGBOUND_DEFINE_ERROR(IndexOutOfRange);
COGBOUND_DEFINE_ERROR(TrainingDiverged);
COGBOUND_DEFINE_ERROR(VersionMismatch);
COGBOUND_DEFINE_ERROR(MissingPolicy);
COGBOUND_DEFINE_ERROR(IntegrityError);
COGBOUND_DEFINE_ERROR(AllWeightsZero);
COGBOUND_DEFINE_ERROR(BudgetExceeded);
COGBOUND_DEFINE_ERROR(ConfigError);

#undef COGBOUND_DEFINE_ERROR

}  // namespace cogbound
