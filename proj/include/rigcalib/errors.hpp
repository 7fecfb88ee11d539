#pragma once

#include <stdexcept>
#include <string>

namespace rigcalib {

// Base class for all library errors so callers can catch the whole family.
struct CalibError : std::runtime_error {
  explicit CalibError(const std::string& what) : std::runtime_error(what) {}
};

struct InvalidArgumentError : CalibError {
  using CalibError::CalibError;
};

// Measurement cannot be processed (S ill conditioned).
struct DegenerateMeasurementError : CalibError {
  using CalibError::CalibError;
};

struct UnsupportedDimensionError : CalibError {
  using CalibError::CalibError;
};

// Propagation interval faults.
struct InvalidIntervalError : CalibError {
  using CalibError::CalibError;
};
struct StreamGapError : CalibError {
  using CalibError::CalibError;
};

// Query outside the buffered trajectory span.
struct ExtrapolationError : CalibError {
  using CalibError::CalibError;
};

struct InsufficientObservationsError : CalibError {
  using CalibError::CalibError;
};

struct MeasurementQualityError : CalibError {
  using CalibError::CalibError;
};

// LiDAR update arrived before the anchor was set.
struct OrderingFaultError : CalibError {
  using CalibError::CalibError;
};

struct DegenerateGeometryError : CalibError {
  using CalibError::CalibError;
};

struct InsufficientOverlapError : CalibError {
  using CalibError::CalibError;
};

// Paired plane normals point opposite ways after canonicalization.
struct SignFaultError : CalibError {
  using CalibError::CalibError;
};

// Clone request older than the kept history horizon.
struct HistoryExpiredError : CalibError {
  using CalibError::CalibError;
};

struct ParseError : CalibError {
  using CalibError::CalibError;
};

struct DatasetFaultError : CalibError {
  using CalibError::CalibError;
};

struct DivergenceError : CalibError {
  using CalibError::CalibError;
};

}  // namespace rigcalib
