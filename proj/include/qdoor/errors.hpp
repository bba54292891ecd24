#pragma once

#include <stdexcept>
#include <string>

namespace qdoor {

/// Base class for every error raised by the toolkit. Carries the name of the
/// module that raised it so front ends can report where a failure originated.
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& message);
  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

#define QDOOR_DECLARE_ERROR(Name, Module)                                   \
  class Name : public Error {                                               \
   public:                                                                  \
    explicit Name(const std::string& message) : Error(Module, message) {}   \
    Name(const std::string& module, const std::string& message)             \
        : Error(module, message) {}                                         \
  };

QDOOR_DECLARE_ERROR(ParameterBindingError, "qcore")
QDOOR_DECLARE_ERROR(ShapeError, "qcore")
QDOOR_DECLARE_ERROR(CapacityError, "qcore")
QDOOR_DECLARE_ERROR(CircuitError, "qcore")
QDOOR_DECLARE_ERROR(FormatError, "qcore")
QDOOR_DECLARE_ERROR(EncodingError, "simulator")
QDOOR_DECLARE_ERROR(PartitionError, "synth")
QDOOR_DECLARE_ERROR(SynthesisError, "synth")
QDOOR_DECLARE_ERROR(ConfigError, "qnn-train")
QDOOR_DECLARE_ERROR(LabelError, "qnn-train")
QDOOR_DECLARE_ERROR(DataError, "data")
QDOOR_DECLARE_ERROR(AttackError, "attacks")

#undef QDOOR_DECLARE_ERROR

}  // namespace qdoor
