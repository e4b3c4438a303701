#pragma once

#include <stdexcept>
#include <string>

namespace cdm {

// Base for every error raised by the engine. The CLI maps all of these to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class EmptyRoiError : public Error {
 public:
  explicit EmptyRoiError(const std::string& roi)
      : Error("ROI '" + roi + "' is empty (0 voxels)"), roi_(roi) {}
  const std::string& roi() const { return roi_; }

 private:
  std::string roi_;
};

class UnknownRoiError : public Error {
 public:
  explicit UnknownRoiError(const std::string& roi) : Error("unknown ROI '" + roi + "'") {}
};

// No finite sigmoid slope can meet the requested tolerance.
class InfeasibleError : public Error {
 public:
  InfeasibleError(const std::string& what, double smallest_feasible_eps)
      : Error(what), smallest_feasible_eps_(smallest_feasible_eps) {}
  double smallest_feasible_eps() const { return smallest_feasible_eps_; }

 private:
  double smallest_feasible_eps_;
};

class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace cdm
