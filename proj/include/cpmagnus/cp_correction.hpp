#pragma once

// Completely positive correction of a perturbative coefficient-matrix series.
//
// C(x) = sum_j D_j x^j (x = 1/w) is diagonalized perturbatively; each
// eigenvalue series lambda(x) = sum_j mu_j x^j is replaced by the exact
// square of a real half-series that agrees with it through order n, and
//
//   C~(x) = sum_i lambda~_i(x) Phi_i(x) Phi_i(x)^+
//
// is positive semidefinite by construction.

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <vector>

#include "cpmagnus/lindblad_projection.hpp"
#include "cpmagnus/magnus_engine.hpp"
#include "cpmagnus/model_spec.hpp"
#include "cpmagnus/operator_algebra.hpp"

namespace cpmagnus {

/// The leading nonzero coefficient of an eigenvalue series is negative, so
/// no higher-order completion can make it nonnegative for all small x.
class CorrectionImpossible : public std::runtime_error {
 public:
  CorrectionImpossible(std::size_t eigen_index, int leading_order, double leading_coefficient);

  std::size_t eigen_index() const { return eigen_index_; }
  int leading_order() const { return leading_order_; }
  double leading_coefficient() const { return leading_coefficient_; }

 private:
  std::size_t eigen_index_;
  int leading_order_;
  double leading_coefficient_;
};

/// One eigenvalue branch of a Hermitian matrix series.
struct EigBranch {
  std::vector<double> values;   // mu_0 .. mu_n
  std::vector<Vector> vectors;  // Phi^(0) .. Phi^(n), intermediate normalization
  bool persistent_degeneracy = false;

  /// First index with |mu_j| > tol, or nullopt for an identically zero series.
  std::optional<int> leading_order(double tol) const;
  double value_at(double x) const;
  Vector vector_at(double x) const;
  /// Vector series rescaled to unit norm as a power series, truncated at n.
  std::vector<Vector> series_normalized_vectors() const;
};

struct EigSeries {
  int order = 0;
  double zero_tolerance = 0.0;  // absolute threshold for vanishing coefficients
  std::vector<EigBranch> branches;
  bool has_persistent_degeneracy() const;
};

struct PerturbativeEigOptions {
  /// Eigenvalues of a leading coefficient closer than this (relative to the
  /// series scale) count as degenerate.
  double degeneracy_tol = 1e-9;
  /// Orders computed beyond n so that degeneracies lifted late still fix the
  /// eigenvectors through order n. Defaults to the matrix size.
  std::optional<int> extra_orders;
};

/// Degenerate Rayleigh-Schroedinger expansion of the eigenpairs of
/// sum_{j<=n} D_j x^j through order n. Branches are sorted by leading order
/// ascending, then leading coefficient descending; identically zero
/// branches come last.
EigSeries perturbative_eig(const OmegaSeries& c_series, int order,
                           const PerturbativeEigOptions& options = {});

/// lambda~(x) = x^j0 (sum_k s_k x^k)^2 agreeing with sum_j mu_j x^j
/// through order n.
struct SquareCompletion {
  std::optional<int> leading_order;  // nullopt: identically zero
  std::vector<double> half;          // s_0 .. s_{n-j0}
  std::vector<double> polynomial;    // coefficients of lambda~ in x

  double evaluate(double x) const;
  /// True if lambda~ equals the truncated input series.
  bool unchanged(const std::vector<double>& mu, double tol) const;
};

/// Throws CorrectionImpossible (with eigen_index) when the leading
/// coefficient is negative. Coefficients with |mu| <= zero_tol count as zero.
SquareCompletion square_complete(const std::vector<double>& mu, int order, double zero_tol = 0.0,
                                 std::size_t eigen_index = 0);

enum class EigenvectorConvention {
  kSeriesNormalized,     // unit norm as a power series, truncated at n
  kIntermediate,         // unit zeroth-order part, corrections orthogonal to it
  kNumericallyNormalized // truncated series evaluated at w, then normalized
};

struct CorrectedCoefficient {
  Matrix c_tilde;
  std::vector<double> lambda_tilde;  // evaluated at w
  std::vector<SquareCompletion> completions;
  EigSeries eig;
  bool correction_needed = false;
};

CorrectedCoefficient corrected_coefficient(
    const OmegaSeries& c_series, int order, double omega,
    EigenvectorConvention convention = EigenvectorConvention::kSeriesNormalized);

/// Square completions for every branch, independent of w.
std::vector<SquareCompletion> complete_all(const EigSeries& eig);

/// C~ = sum_i lambda~_i Phi_i Phi_i^+ at w from precomputed branches.
Matrix reconstruct(const EigSeries& eig, const std::vector<SquareCompletion>& completions,
                   double omega, EigenvectorConvention convention);

struct CorrectedGenerator {
  SuperOp corrected;    // from h_n(w) and C~_n
  SuperOp uncorrected;  // from h_n(w) and c_n(w)
  CorrectedCoefficient coefficient;
};

/// Reuses a decomposition of at least `order`; higher terms are dropped.
CorrectedGenerator corrected_generator(
    const LindbladDecomposition& dec, int order, double omega,
    EigenvectorConvention convention = EigenvectorConvention::kSeriesNormalized);

CorrectedGenerator corrected_generator(const DrivenModel& model, int order, double omega);

}  // namespace cpmagnus
