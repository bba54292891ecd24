#include "qdoor/errors.hpp"

namespace qdoor {

Error::Error(std::string module, const std::string& message)
    : std::runtime_error(module + ": " + message), module_(std::move(module)) {}

}  // namespace qdoor
