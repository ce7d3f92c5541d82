#pragma once

#include <stdexcept>
#include <string>

namespace formation {

// Base for every error raised by the library.
class FormationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public FormationError {
 public:
  using FormationError::FormationError;
};

// Input is well-formed but outside the regime the toolkit supports
// (for instance rigidity with fewer agents than ambient dimensions).
class UnsupportedCase : public FormationError {
 public:
  using FormationError::FormationError;
};

// A square-root vector field was asked for its derivative where it vanishes.
class NonsmoothPoint : public FormationError {
 public:
  using FormationError::FormationError;
};

class ValidationError : public FormationError {
 public:
  using FormationError::FormationError;
};

class EstimationError : public FormationError {
 public:
  using FormationError::FormationError;
};

}  // namespace formation
