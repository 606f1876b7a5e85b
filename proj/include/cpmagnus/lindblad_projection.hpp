#pragma once

// Reads an effective Hamiltonian and coefficient matrix off a superoperator
// (or a series of superoperators) over a declared operator basis.

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cpmagnus/magnus_engine.hpp"
#include "cpmagnus/model_spec.hpp"
#include "cpmagnus/operator_algebra.hpp"

namespace cpmagnus {

inline constexpr double kBasisResidualThreshold = 1e-8;

/// The generator has a part that no (h, c) over the basis reproduces.
class BasisInsufficient : public std::runtime_error {
 public:
  BasisInsufficient(double remainder_norm, double relative_residual,
                    std::optional<int> order = std::nullopt);

  double remainder_norm() const { return remainder_norm_; }
  double relative_residual() const { return relative_residual_; }
  std::optional<int> order() const { return order_; }

 private:
  double remainder_norm_;
  double relative_residual_;
  std::optional<int> order_;
};

/// Input is not trace-annihilating or not Hermiticity-preserving.
class InvalidGenerator : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ProjectionOptions {
  /// When set, only inputs |i><j| with i, j < interior enter the fit and the
  /// residual. Used for truncated infinite systems.
  std::optional<std::size_t> interior;
  double threshold = kBasisResidualThreshold;
};

struct LindbladProjection {
  Matrix h;  // Hermitian, traceless
  Matrix c;  // Hermitian, m x m
  double residual = 0.0;
};

/// Validated form of the Lindblad superoperator: h and c must be Hermitian.
SuperOp assemble_lindblad(const Matrix& h, const Matrix& c, const std::vector<Matrix>& basis);

LindbladProjection project_to_lindblad(const SuperOp& g, const std::vector<Matrix>& basis,
                                       const ProjectionOptions& options = {});

struct LindbladDecomposition {
  std::vector<Matrix> basis_ops;
  OmegaSeries h_series;
  OmegaSeries c_series;
  double residual = 0.0;
  std::vector<double> residuals;  // per power of 1/w

  int order() const { return c_series.order(); }
  std::size_t dim() const;

  Matrix h_at(double omega) const { return h_series.evaluate(omega); }
  Matrix c_at(double omega) const { return c_series.evaluate(omega); }
  SuperOp generator_at(double omega) const;
};

LindbladDecomposition project_series(const OmegaSeries& series, const std::vector<Matrix>& basis,
                                     const ProjectionOptions& options = {});

/// Keeps the Hamiltonian on the lowest `levels` states, re-gauged traceless,
/// with basis_ops replaced by their truncation.
LindbladDecomposition restrict_decomposition(const LindbladDecomposition& dec,
                                             std::size_t levels,
                                             std::vector<Matrix> truncated_basis);

/// Effective series of the model to `order`, projected over the model's basis
/// for that order, on the model's working dimension.
LindbladDecomposition decompose(const DrivenModel& model, int order);

}  // namespace cpmagnus
