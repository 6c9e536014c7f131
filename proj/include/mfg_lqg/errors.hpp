#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace mfg_lqg {

/// Base class for every error raised by the library. The CLI maps the
/// concrete subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input: wrong shapes, missing or unknown fields, bad values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Query outside a grid's time range.
class OutOfRangeError : public Error {
 public:
  using Error::Error;
};

/// Integration, Riccati, ARE or fixed-point failure.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class IntegrationDiverged : public NumericalError {
 public:
  IntegrationDiverged(const std::string& what, int node)
      : NumericalError(what), node_(node) {}
  int node() const { return node_; }

 private:
  int node_;
};

class RiccatiBlowup : public NumericalError {
 public:
  RiccatiBlowup(const std::string& what, int last_finite_node)
      : NumericalError(what), last_finite_node_(last_finite_node) {}
  int last_finite_node() const { return last_finite_node_; }

 private:
  int last_finite_node_;
};

/// A simulated path left the finite range.
class PathDiverged : public NumericalError {
 public:
  PathDiverged(const std::string& what, int path, int node)
      : NumericalError(what), path_(path), node_(node) {}
  int path() const { return path_; }
  int node() const { return node_; }

 private:
  int path_;
  int node_;
};

/// Picard iteration exhausted its budget; carries the residual trace.
class FixedPointFailure : public NumericalError {
 public:
  FixedPointFailure(const std::string& what, std::vector<double> residuals)
      : NumericalError(what), residuals_(std::move(residuals)) {}
  const std::vector<double>& residuals() const { return residuals_; }

 private:
  std::vector<double> residuals_;
};

/// Operation not defined for this input (e.g. the deterministic Gateaux
/// oracle called with noise).
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

/// A modelling assumption (convexity, stabilizability, stability...) fails.
class AssumptionViolation : public Error {
 public:
  using Error::Error;
};

}  // namespace mfg_lqg
