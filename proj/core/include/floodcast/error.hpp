#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace floodcast {

// Every failure mode surfaced by the library. The CLI maps these to
// machine-readable error JSON, so names are stable identifiers.
enum class Errc {
  missing_file,
  schema_mismatch,
  duplicate_id,
  non_finite_value,
  coverage_gap,
  unknown_event,
  io_failure,
  foreign_key_violation,
  invalid_count,
  invalid_duration,
  incomplete_features,
  empty_table,
  no_gauges,
  degenerate_feature,
  missing_tide,
  unknown_segment,
  event_too_short,
  overlapping_splits,
  shape_mismatch,
  empty_batch,
  invalid_config,
  non_finite_loss,
  scaler_mismatch,
  empty_input,
  length_mismatch,
  missing_fold_model,
  insufficient_rows,
  empty_log,
  unknown_command,
  config_invalid,
};

const char* errc_name(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void raise(Errc code, const std::string& message) {
  throw Error(code, message);
}

inline const char* errc_name(Errc code) {
  switch (code) {
    case Errc::missing_file: return "MissingFile";
    case Errc::schema_mismatch: return "SchemaMismatch";
    case Errc::duplicate_id: return "DuplicateId";
    case Errc::non_finite_value: return "NonFiniteValue";
    case Errc::coverage_gap: return "CoverageGap";
    case Errc::unknown_event: return "UnknownEvent";
    case Errc::io_failure: return "IoFailure";
    case Errc::foreign_key_violation: return "ForeignKeyViolation";
    case Errc::invalid_count: return "InvalidCount";
    case Errc::invalid_duration: return "InvalidDuration";
    case Errc::incomplete_features: return "IncompleteFeatures";
    case Errc::empty_table: return "EmptyTable";
    case Errc::no_gauges: return "NoGauges";
    case Errc::degenerate_feature: return "DegenerateFeature";
    case Errc::missing_tide: return "MissingTide";
    case Errc::unknown_segment: return "UnknownSegment";
    case Errc::event_too_short: return "EventTooShort";
    case Errc::overlapping_splits: return "OverlappingSplits";
    case Errc::shape_mismatch: return "ShapeMismatch";
    case Errc::empty_batch: return "EmptyBatch";
    case Errc::invalid_config: return "InvalidConfig";
    case Errc::non_finite_loss: return "NonFiniteLoss";
    case Errc::scaler_mismatch: return "ScalerMismatch";
    case Errc::empty_input: return "EmptyInput";
    case Errc::length_mismatch: return "LengthMismatch";
    case Errc::missing_fold_model: return "MissingFoldModel";
    case Errc::insufficient_rows: return "InsufficientRows";
    case Errc::empty_log: return "EmptyLog";
    case Errc::unknown_command: return "UnknownCommand";
    case Errc::config_invalid: return "ConfigInvalid";
  }
  return "UnknownError";
}

}  // namespace floodcast
