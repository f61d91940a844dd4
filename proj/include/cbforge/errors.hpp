#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cbforge {

/// Base class for every error the library raises. `kind()` is a stable
/// snake_case token used by the CLI for its single-line error output.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define CBFORGE_DEFINE_ERROR(Name, token)                     \
  class Name : public Error {                                 \
   public:                                                    \
    explicit Name(const std::string& what) : Error(token, what) {} \
  };

CBFORGE_DEFINE_ERROR(ParseError, "parse_error")
CBFORGE_DEFINE_ERROR(IntegrityError, "integrity_error")
CBFORGE_DEFINE_ERROR(ConfigError, "config_error")
CBFORGE_DEFINE_ERROR(PreconditionError, "precondition_error")
CBFORGE_DEFINE_ERROR(TransportError, "transport_error")
CBFORGE_DEFINE_ERROR(RequestError, "request_error")
CBFORGE_DEFINE_ERROR(GenerationError, "generation_error")
CBFORGE_DEFINE_ERROR(SamplingError, "sampling_error")
CBFORGE_DEFINE_ERROR(UpsamplingError, "upsampling_error")
CBFORGE_DEFINE_ERROR(TrainingError, "training_error")
CBFORGE_DEFINE_ERROR(DivergenceError, "divergence_error")
CBFORGE_DEFINE_ERROR(ArithmeticError, "arithmetic_error")
CBFORGE_DEFINE_ERROR(ContractViolation, "contract_violation")
CBFORGE_DEFINE_ERROR(IoError, "io_error")

#undef CBFORGE_DEFINE_ERROR

/// Every attempt of complete_until_accepted() came back as a refusal.
class RefusalError : public Error {
 public:
  RefusalError(const std::string& what, std::size_t attempts)
      : Error("refusal_error", what), attempts_(attempts) {}
  std::size_t attempts() const noexcept { return attempts_; }

 private:
  std::size_t attempts_;
};

}  // namespace cbforge
