#pragma once

#include <stdexcept>
#include <string>

namespace droneear {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define DRONEEAR_ERROR(Name)            \
  class Name : public Error {           \
   public:                              \
    using Error::Error;                 \
  }

DRONEEAR_ERROR(InputDomainError);
DRONEEAR_ERROR(DegenerateInputError);
DRONEEAR_ERROR(CalibrationSignalError);
DRONEEAR_ERROR(UnreliablePulseError);
DRONEEAR_ERROR(InsufficientCalibrationDataError);
DRONEEAR_ERROR(InconsistentDistancesError);
DRONEEAR_ERROR(GainUnobservableError);
DRONEEAR_ERROR(PreconditionError);
DRONEEAR_ERROR(ContractViolationError);
DRONEEAR_ERROR(InsufficientTrainingDataError);
DRONEEAR_ERROR(ConfigurationError);
DRONEEAR_ERROR(SequencingError);
DRONEEAR_ERROR(GeometryError);
DRONEEAR_ERROR(DegenerateSceneError);
DRONEEAR_ERROR(FormatError);
DRONEEAR_ERROR(CapacityError);

#undef DRONEEAR_ERROR

}  // namespace droneear
