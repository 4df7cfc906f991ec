#pragma once

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace piobs {

/// Root of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Malformed or out-of-contract user input (non-finite entries, bad targets, ...).
class InputError : public Error {
 public:
  using Error::Error;
};

/// An iterative kernel failed to converge, or a post-condition could not be met.
class NumericalFailure : public Error {
 public:
  using Error::Error;
};

class SingularityError : public NumericalFailure {
 public:
  SingularityError(const std::string& what, double rcond)
      : NumericalFailure(what), rcond_(rcond) {}

  /// Reciprocal 1-norm condition estimate of the offending matrix.
  double rcond() const noexcept { return rcond_; }

 private:
  double rcond_;
};

/// A matrix that must have full row rank does not.
class RankDeficiencyError : public Error {
 public:
  RankDeficiencyError(const std::string& what, std::size_t rank, std::size_t expected)
      : Error(what), rank_(rank), expected_(expected) {}

  std::size_t rank() const noexcept { return rank_; }
  std::size_t expected() const noexcept { return expected_; }

 private:
  std::size_t rank_;
  std::size_t expected_;
};

/// The pair (A, C) is unobservable where observability is required.
class StructuralError : public Error {
 public:
  using Error::Error;
};

/// No PI observer exists: (A, C) has unstable eigenvalues that are unobservable.
class InfeasibleError : public Error {
 public:
  InfeasibleError(const std::string& what, std::vector<std::complex<double>> witness)
      : Error(what), witness_(std::move(witness)) {}

  const std::vector<std::complex<double>>& witness() const noexcept { return witness_; }

 private:
  std::vector<std::complex<double>> witness_;
};

}  // namespace piobs
