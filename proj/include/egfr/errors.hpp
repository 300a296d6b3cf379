#pragma once

#include <stdexcept>
#include <string>

namespace egfr {

// Error taxonomy; the CLI maps these onto exit codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : Error {
  using Error::Error;
};
struct ValidationError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};
struct RenderError : Error {
  using Error::Error;
};
struct TemplateError : Error {
  using Error::Error;
};
struct TransportError : Error {
  using Error::Error;
};
struct CredentialError : TransportError {
  using TransportError::TransportError;
};
struct ReplayError : Error {
  using Error::Error;
};
struct PolicyError : Error {
  using Error::Error;
};
struct MetricError : Error {
  using Error::Error;
};
struct ShapeError : Error {
  using Error::Error;
};
struct StageError : Error {
  using Error::Error;
};
struct TrainingError : Error {
  using Error::Error;
};

}  // namespace egfr
