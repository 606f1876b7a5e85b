#pragma once

// Dense complex linear algebra for operators (d x d) and superoperators
// (d^2 x d^2). Density matrices are vectorized by column stacking, so that
// vec(a * rho * b) = (b^T kron a) * vec(rho).

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace cpmagnus {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;

inline constexpr Complex kI{0.0, 1.0};

class DimensionMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NotHermitian : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Superoperator acting on column-stacked density matrices.
struct SuperOp {
  std::size_t dim = 0;  // Hilbert-space dimension d
  Matrix mat;           // d^2 x d^2

  SuperOp() = default;
  SuperOp(std::size_t d, Matrix m);

  static SuperOp identity(std::size_t d);
  static SuperOp zero(std::size_t d);

  /// Applies the map to an operator rho.
  Matrix apply(const Matrix& rho) const;
};

Matrix kron(const Matrix& a, const Matrix& b);

/// Column-stacking vectorization and its inverse.
Vector vec(const Matrix& rho);
Matrix unvec(const Vector& v, std::size_t d);

/// Superoperator of rho -> a * rho * b.
SuperOp left_right_super(const Matrix& a, const Matrix& b);

/// Superoperator of rho -> -i [h, rho].
SuperOp commutator_super(const Matrix& h);

struct HermitianEig {
  RealVector values;  // ascending
  Matrix vectors;     // orthonormal columns
};

double hermiticity_defect(const Matrix& m);
bool is_hermitian(const Matrix& m, double rel_tol = 1e-12);
Matrix hermitian_part(const Matrix& m);

/// Eigendecomposition of a Hermitian matrix. Each eigenvector has its
/// largest-magnitude component made real and positive.
HermitianEig hermitian_eig(const Matrix& m, double rel_tol = 1e-12);

/// Rotates v so that its largest-magnitude entry is real and positive.
void fix_phase(Eigen::Ref<Vector> v);

/// exp(m) by scaling and squaring with a [13/13] Pade approximant.
Matrix matrix_exp(const Matrix& m);

double hs_norm(const Matrix& m);

/// Row vector vec(1)^dagger; a generator G preserves trace iff it
/// annihilates this row from the left.
Eigen::RowVectorXcd trace_row(std::size_t d);

/// max |vec(1)^dagger * mat| relative to max(1, ||mat||).
double trace_defect(const SuperOp& s);

namespace pauli {
Matrix identity();
Matrix x();
Matrix y();
Matrix z();
}  // namespace pauli

namespace ladder {
/// Truncated annihilation operator on levels 0..n-1.
Matrix annihilation(std::size_t n);
Matrix creation(std::size_t n);
Matrix number(std::size_t n);
}  // namespace ladder

}  // namespace cpmagnus
