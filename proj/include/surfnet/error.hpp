#pragma once

#include <stdexcept>
#include <string>

namespace surfnet {

/// Base class of every error raised by the library. Subclasses name the
/// failure kind; the message carries the offending element index when one
/// exists.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define SURFNET_DEFINE_ERROR(Name)        \
  class Name : public Error {             \
   public:                                \
    using Error::Error;                   \
  }

SURFNET_DEFINE_ERROR(ParseError);
SURFNET_DEFINE_ERROR(ValidationError);
SURFNET_DEFINE_ERROR(IoError);
SURFNET_DEFINE_ERROR(InvalidBlock);
SURFNET_DEFINE_ERROR(DimensionMismatch);
SURFNET_DEFINE_ERROR(TooLarge);
SURFNET_DEFINE_ERROR(NonSymmetric);
SURFNET_DEFINE_ERROR(NonPositiveMass);
SURFNET_DEFINE_ERROR(NotScalar);
SURFNET_DEFINE_ERROR(ShapeMismatch);
SURFNET_DEFINE_ERROR(NonQuadChannels);
SURFNET_DEFINE_ERROR(DegenerateInput);
SURFNET_DEFINE_ERROR(OutOfDomain);
SURFNET_DEFINE_ERROR(DisconnectedMesh);
SURFNET_DEFINE_ERROR(NoLabels);
SURFNET_DEFINE_ERROR(ConfigError);
SURFNET_DEFINE_ERROR(NumericalError);

#undef SURFNET_DEFINE_ERROR

/// Face area below the degeneracy threshold. A ValidationError so that
/// callers validating a mesh catch it with the other topology failures.
class DegenerateFace : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// An undirected edge shared by more than two faces.
class NonManifoldEdge : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

}  // namespace surfnet
