#include "cpmagnus/operator_algebra.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <unsupported/Eigen/MatrixFunctions>

namespace cpmagnus {

SuperOp::SuperOp(std::size_t d, Matrix m) : dim(d), mat(std::move(m)) {
  const auto n = static_cast<Eigen::Index>(d * d);
  if (mat.rows() != n || mat.cols() != n) {
    throw DimensionMismatch("SuperOp: matrix shape does not match d^2 x d^2");
  }
}

SuperOp SuperOp::identity(std::size_t d) {
  const auto n = static_cast<Eigen::Index>(d * d);
  return SuperOp(d, Matrix::Identity(n, n));
}

SuperOp SuperOp::zero(std::size_t d) {
  const auto n = static_cast<Eigen::Index>(d * d);
  return SuperOp(d, Matrix::Zero(n, n));
}

Matrix SuperOp::apply(const Matrix& rho) const {
  if (static_cast<std::size_t>(rho.rows()) != dim || rho.rows() != rho.cols()) {
    throw DimensionMismatch("SuperOp::apply: operator dimension mismatch");
  }
  return unvec(mat * vec(rho), dim);
}

Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

Vector vec(const Matrix& rho) {
  return Eigen::Map<const Vector>(rho.data(), rho.size());
}

Matrix unvec(const Vector& v, std::size_t d) {
  const auto n = static_cast<Eigen::Index>(d);
  if (v.size() != n * n) {
    throw DimensionMismatch("unvec: vector length is not d^2");
  }
  return Eigen::Map<const Matrix>(v.data(), n, n);
}

SuperOp left_right_super(const Matrix& a, const Matrix& b) {
  if (a.rows() != a.cols() || b.rows() != b.cols() || a.rows() != b.rows()) {
    throw DimensionMismatch("left_right_super: a and b must be square of equal dimension");
  }
  return SuperOp(static_cast<std::size_t>(a.rows()), kron(b.transpose(), a));
}

SuperOp commutator_super(const Matrix& h) {
  if (h.rows() != h.cols()) {
    throw DimensionMismatch("commutator_super: operator must be square");
  }
  const Matrix id = Matrix::Identity(h.rows(), h.cols());
  return SuperOp(static_cast<std::size_t>(h.rows()),
                 -kI * (kron(id, h) - kron(h.transpose(), id)));
}

double hermiticity_defect(const Matrix& m) {
  if (m.size() == 0) {
    return 0.0;
  }
  return (m - m.adjoint()).cwiseAbs().maxCoeff();
}

bool is_hermitian(const Matrix& m, double rel_tol) {
  if (m.rows() != m.cols()) {
    return false;
  }
  return hermiticity_defect(m) <= rel_tol * std::max(1.0, m.norm());
}

Matrix hermitian_part(const Matrix& m) { return 0.5 * (m + m.adjoint()); }

void fix_phase(Eigen::Ref<Vector> v) {
  if (v.size() == 0) {
    return;
  }
  Eigen::Index arg = 0;
  double best = -1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    // Ties go to the lowest index; the slack keeps that stable under rounding.
    if (std::abs(v(i)) > best * (1.0 + 1e-10)) {
      best = std::abs(v(i));
      arg = i;
    }
  }
  if (best > 0.0) {
    v *= std::conj(v(arg)) / best;
    v(arg) = Complex(std::abs(v(arg)), 0.0);
  }
}

HermitianEig hermitian_eig(const Matrix& m, double rel_tol) {
  if (m.rows() != m.cols()) {
    throw DimensionMismatch("hermitian_eig: matrix must be square");
  }
  if (!is_hermitian(m, rel_tol)) {
    std::ostringstream msg;
    msg << "hermitian_eig: input deviates from Hermitian by " << hermiticity_defect(m);
    throw NotHermitian(msg.str());
  }
  Eigen::SelfAdjointEigenSolver<Matrix> solver(hermitian_part(m));
  HermitianEig out{solver.eigenvalues(), solver.eigenvectors()};
  for (Eigen::Index j = 0; j < out.vectors.cols(); ++j) {
    fix_phase(out.vectors.col(j));
  }
  return out;
}

Matrix matrix_exp(const Matrix& m) {
  if (m.rows() != m.cols()) {
    throw DimensionMismatch("matrix_exp: matrix must be square");
  }
  return m.exp();
}

double hs_norm(const Matrix& m) { return m.norm(); }

Eigen::RowVectorXcd trace_row(std::size_t d) {
  return vec(Matrix::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d)))
      .adjoint();
}

double trace_defect(const SuperOp& s) {
  const Eigen::RowVectorXcd row = trace_row(s.dim) * s.mat;
  const double scale = std::max(1.0, s.mat.norm());
  return row.size() == 0 ? 0.0 : row.cwiseAbs().maxCoeff() / scale;
}

namespace pauli {
Matrix identity() { return Matrix::Identity(2, 2); }
Matrix x() {
  Matrix m(2, 2);
  m << 0, 1, 1, 0;
  return m;
}
Matrix y() {
  Matrix m(2, 2);
  m << 0, -kI, kI, 0;
  return m;
}
Matrix z() {
  Matrix m(2, 2);
  m << 1, 0, 0, -1;
  return m;
}
}  // namespace pauli

namespace ladder {
Matrix annihilation(std::size_t n) {
  const auto d = static_cast<Eigen::Index>(n);
  Matrix a = Matrix::Zero(d, d);
  for (Eigen::Index k = 1; k < d; ++k) {
    a(k - 1, k) = std::sqrt(static_cast<double>(k));
  }
  return a;
}
Matrix creation(std::size_t n) { return annihilation(n).adjoint(); }
Matrix number(std::size_t n) {
  const auto d = static_cast<Eigen::Index>(n);
  Matrix m = Matrix::Zero(d, d);
  for (Eigen::Index k = 0; k < d; ++k) {
    m(k, k) = static_cast<double>(k);
  }
  return m;
}
}  // namespace ladder

}  // namespace cpmagnus
