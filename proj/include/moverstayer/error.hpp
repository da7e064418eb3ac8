#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace moverstayer {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

class DimensionError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "dimension"; }
};

// Invalid panel data. `row` is the 1-based line number of the offending
// record when the data came from a file (0 otherwise).
class DataError : public Error {
 public:
  enum class Code {
    invalid_subject,
    bad_header,
    ragged_row,
    bad_number,
    non_binary_delta,
    inconsistent_subject,
    inconsistent_fixed_covariates,
    missing_time,
    empty_dataset,
    io,
  };

  DataError(Code code, std::string message, std::size_t row = 0,
            std::string subject = {})
      : Error(decorate(message, row, subject)),
        code_(code),
        row_(row),
        subject_(std::move(subject)) {}

  const char* kind() const noexcept override { return "data"; }
  Code code() const noexcept { return code_; }
  std::size_t row() const noexcept { return row_; }
  const std::string& subject() const noexcept { return subject_; }

 private:
  static std::string decorate(const std::string& message, std::size_t row,
                              const std::string& subject) {
    std::string out;
    if (row > 0) out += "row " + std::to_string(row) + ": ";
    if (!subject.empty()) out += "subject " + subject + ": ";
    return out + message;
  }

  Code code_;
  std::size_t row_;
  std::string subject_;
};

class EnumerationBoundError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "enumeration_bound"; }
};

class NumericalError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "numerical"; }
};

class FitError : public NumericalError {
 public:
  using NumericalError::NumericalError;
  const char* kind() const noexcept override { return "fit"; }
};

// Negated Hessian of the log-likelihood is not positive definite.
class HessianError : public NumericalError {
 public:
  HessianError(const std::string& message, double eigenvalue, int index)
      : NumericalError(message), eigenvalue_(eigenvalue), index_(index) {}
  const char* kind() const noexcept override { return "hessian"; }
  double eigenvalue() const noexcept { return eigenvalue_; }
  int index() const noexcept { return index_; }

 private:
  double eigenvalue_;
  int index_;
};

// Inner Newton solve of the M-step failed; carries where it stopped.
class MStepError : public NumericalError {
 public:
  MStepError(const std::string& block, int iteration, double gradient_norm)
      : NumericalError("M-step (" + block + ") failed at inner iteration " +
                       std::to_string(iteration) + ", gradient max-norm " +
                       std::to_string(gradient_norm)),
        block_(block),
        iteration_(iteration),
        gradient_norm_(gradient_norm) {}
  const char* kind() const noexcept override { return "m_step"; }
  const std::string& block() const noexcept { return block_; }
  int iteration() const noexcept { return iteration_; }
  double gradient_norm() const noexcept { return gradient_norm_; }

 private:
  std::string block_;
  int iteration_;
  double gradient_norm_;
};

class BootstrapError : public NumericalError {
 public:
  using NumericalError::NumericalError;
  const char* kind() const noexcept override { return "bootstrap"; }
};

}  // namespace moverstayer
