#ifndef MLCA_ERROR_HPP
#define MLCA_ERROR_HPP

#include <stdexcept>
#include <string>

namespace mlca {

// Exit-code mapping used by the C API and CLI:
//   usage/config problems -> 1, verification failures -> 2, divergence -> 3.

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FusionLengthError : DimensionError {
  using DimensionError::DimensionError;
};

struct InfeasibleAlignmentError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ContractViolation : std::logic_error {
  using std::logic_error::logic_error;
};

struct PathError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct VerificationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DivergedError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace mlca

#endif
