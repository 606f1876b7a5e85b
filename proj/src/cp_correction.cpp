#include "cpmagnus/cp_correction.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace cpmagnus {

namespace {

using MatSeries = std::vector<Matrix>;

std::string impossible_message(std::size_t index, int order, double coeff) {
  std::ostringstream msg;
  msg << "eigenvalue " << index << " has negative leading coefficient " << coeff
      << " at order w^-" << order << "; no completely positive completion exists";
  return msg.str();
}

MatSeries series_mul(const MatSeries& a, const MatSeries& b, std::size_t len) {
  MatSeries out(len, Matrix::Zero(a.front().rows(), b.front().cols()));
  for (std::size_t j = 0; j < len; ++j) {
    for (std::size_t l = 0; l <= j; ++l) {
      if (l < a.size() && j - l < b.size()) {
        out[j].noalias() += a[l] * b[j - l];
      }
    }
  }
  return out;
}

MatSeries series_adjoint(const MatSeries& a) {
  MatSeries out;
  out.reserve(a.size());
  for (const auto& m : a) {
    out.push_back(m.adjoint());
  }
  return out;
}

/// Orthonormal basis of span(v) obtained by projecting e_0, e_1, ... in
/// order, with the phase convention applied to each vector.
Matrix canonical_basis(const Matrix& v) {
  const Eigen::Index m = v.rows();
  const Eigen::Index k = v.cols();
  Matrix out(m, k);
  Eigen::Index found = 0;
  for (Eigen::Index i = 0; i < m && found < k; ++i) {
    Vector u = v * v.row(i).adjoint();  // P e_i
    for (Eigen::Index j = 0; j < found; ++j) {
      u -= out.col(j) * out.col(j).dot(u);
    }
    const double norm = u.norm();
    if (norm > 1e-6) {
      u /= norm;
      fix_phase(u);
      out.col(found++) = u;
    }
  }
  return out;
}

struct RawBranch {
  std::vector<double> values;
  std::vector<Vector> vectors;
  bool persistent = false;
};

/// Eigenpair series of C(x) = sum_{j<len} C_j x^j. Vectors come out with unit
/// norm as a series; the deepest orders lose accuracy once per recursion.
std::vector<RawBranch> expand(const MatSeries& c, std::size_t len, double tol) {
  const Eigen::Index m = c.front().rows();
  Eigen::SelfAdjointEigenSolver<Matrix> solver(hermitian_part(c.front()));
  const RealVector& d = solver.eigenvalues();

  // Clusters of (numerically) equal leading eigenvalues, ascending.
  std::vector<std::pair<Eigen::Index, Eigen::Index>> clusters;  // [begin, end)
  for (Eigen::Index i = 0; i < m;) {
    Eigen::Index j = i + 1;
    while (j < m && d(j) - d(j - 1) <= tol) {
      ++j;
    }
    clusters.emplace_back(i, j);
    i = j;
  }
  Matrix u(m, m);
  RealVector level(m);
  for (const auto& [b, e] : clusters) {
    const double mean = d.segment(b, e - b).mean();
    u.middleCols(b, e - b) = canonical_basis(solver.eigenvectors().middleCols(b, e - b));
    level.segment(b, e - b).setConstant(mean);
  }

  std::vector<RawBranch> out;
  if (len == 1) {
    for (const auto& [b, e] : clusters) {
      for (Eigen::Index i = b; i < e; ++i) {
        out.push_back({{level(i)}, {u.col(i)}, e - b > 1});
      }
    }
    return out;
  }

  for (const auto& [b, e] : clusters) {
    const Eigen::Index k = e - b;
    const double lambda0 = level(b);
    // Reorder so the cluster comes first: basis = [P | Q].
    Matrix basis(m, m);
    RealVector q_levels(m - k);
    basis.leftCols(k) = u.middleCols(b, k);
    Eigen::Index col = k;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (i < b || i >= e) {
        basis.col(col) = u.col(i);
        q_levels(col - k) = level(i);
        ++col;
      }
    }
    MatSeries cp;
    cp.reserve(len);
    for (std::size_t j = 0; j < len; ++j) {
      cp.push_back(j < c.size() ? Matrix(basis.adjoint() * c[j] * basis)
                                : Matrix(Matrix::Zero(m, m)));
    }

    // Invariant subspace spanned by [I; Z(x)]:  Z E = B^+ + D_q Z, E = A + B Z.
    const Eigen::Index nq = m - k;
    MatSeries z(len, Matrix::Zero(nq, k));
    MatSeries eff(len, Matrix::Zero(k, k));
    eff[0] = lambda0 * Matrix::Identity(k, k);
    for (std::size_t j = 1; j < len && nq > 0; ++j) {
      if (j >= 2) {
        Matrix e_prev = cp[j - 1].topLeftCorner(k, k);
        for (std::size_t s = 1; s + 1 < j; ++s) {
          e_prev.noalias() += cp[s].topRightCorner(k, nq) * z[j - 1 - s];
        }
        eff[j - 1] = e_prev;
      }
      Matrix rhs = -cp[j].bottomLeftCorner(nq, k);
      for (std::size_t l = 1; l < j; ++l) {
        rhs.noalias() -= cp[l].bottomRightCorner(nq, nq) * z[j - l];
        rhs.noalias() += z[l] * eff[j - l];
      }
      for (Eigen::Index r = 0; r < nq; ++r) {
        rhs.row(r) /= (q_levels(r) - lambda0);
      }
      z[j] = std::move(rhs);
    }

    MatSeries w(len, Matrix::Zero(m, k));
    w[0].topRows(k) = Matrix::Identity(k, k);
    for (std::size_t j = 1; j < len; ++j) {
      w[j].bottomRows(nq) = z[j];
    }
    // Orthonormalize: W (W^+ W)^{-1/2}, with W^+ W = 1 + O(x^2).
    MatSeries y = series_mul(series_adjoint(w), w, len);
    y[0].setZero();
    MatSeries inv_sqrt(len, Matrix::Zero(k, k));
    inv_sqrt[0] = Matrix::Identity(k, k);
    MatSeries power = inv_sqrt;
    double binom = 1.0;
    for (std::size_t r = 1; 2 * r < len; ++r) {
      binom *= (-0.5 - static_cast<double>(r - 1)) / static_cast<double>(r);
      power = series_mul(power, y, len);
      for (std::size_t j = 0; j < len; ++j) {
        inv_sqrt[j] += binom * power[j];
      }
    }
    const MatSeries w_hat = series_mul(w, inv_sqrt, len);
    const MatSeries h_eff = series_mul(series_mul(series_adjoint(w_hat), cp, len), w_hat, len);

    const auto lift = [&](const MatSeries& sub_vectors) {
      // basis * W^ * v, as a series of length len.
      std::vector<Vector> vecs(len, Vector::Zero(m));
      for (std::size_t j = 0; j < len; ++j) {
        for (std::size_t l = 0; l <= j; ++l) {
          if (j - l < sub_vectors.size()) {
            vecs[j] += basis * (w_hat[l] * sub_vectors[j - l]);
          }
        }
      }
      return vecs;
    };

    if (k == 1) {
      RawBranch br;
      for (std::size_t j = 0; j < len; ++j) {
        br.values.push_back(h_eff[j](0, 0).real());
      }
      br.values[0] = lambda0;
      br.vectors = lift({Matrix::Ones(1, 1)});
      out.push_back(std::move(br));
      continue;
    }

    MatSeries sub_series;
    for (std::size_t j = 1; j < len; ++j) {
      sub_series.push_back(hermitian_part(h_eff[j]));
    }
    for (auto& sub : expand(sub_series, len - 1, tol)) {
      RawBranch br;
      br.values.push_back(lambda0);
      br.values.insert(br.values.end(), sub.values.begin(), sub.values.end());
      MatSeries sub_vecs;
      for (const auto& v : sub.vectors) {
        sub_vecs.push_back(v);
      }
      br.vectors = lift(sub_vecs);
      br.persistent = sub.persistent;
      out.push_back(std::move(br));
    }
  }
  return out;
}

}  // namespace

CorrectionImpossible::CorrectionImpossible(std::size_t eigen_index, int leading_order,
                                           double leading_coefficient)
    : std::runtime_error(impossible_message(eigen_index, leading_order, leading_coefficient)),
      eigen_index_(eigen_index),
      leading_order_(leading_order),
      leading_coefficient_(leading_coefficient) {}

std::optional<int> EigBranch::leading_order(double tol) const {
  for (std::size_t j = 0; j < values.size(); ++j) {
    if (std::abs(values[j]) > tol) {
      return static_cast<int>(j);
    }
  }
  return std::nullopt;
}

double EigBranch::value_at(double x) const {
  double out = 0.0;
  for (auto it = values.rbegin(); it != values.rend(); ++it) {
    out = out * x + *it;
  }
  return out;
}

Vector EigBranch::vector_at(double x) const {
  Vector out = Vector::Zero(vectors.front().size());
  for (auto it = vectors.rbegin(); it != vectors.rend(); ++it) {
    out = (out * x + *it).eval();
  }
  return out;
}

std::vector<Vector> EigBranch::series_normalized_vectors() const {
  const std::size_t len = vectors.size();
  // norm(x)^2 = 1 + y(x), y = O(x^2) under intermediate normalization.
  std::vector<double> y(len, 0.0);
  for (std::size_t j = 1; j < len; ++j) {
    for (std::size_t l = 0; l <= j; ++l) {
      y[j] += vectors[l].dot(vectors[j - l]).real();
    }
  }
  std::vector<double> inv_sqrt(len, 0.0);
  inv_sqrt[0] = 1.0;
  std::vector<double> power(len, 0.0);
  power[0] = 1.0;
  double binom = 1.0;
  for (std::size_t r = 1; r < len; ++r) {
    binom *= (-0.5 - static_cast<double>(r - 1)) / static_cast<double>(r);
    std::vector<double> next(len, 0.0);
    for (std::size_t j = 0; j < len; ++j) {
      for (std::size_t l = 0; l <= j; ++l) {
        next[j] += power[l] * y[j - l];
      }
    }
    power = std::move(next);
    for (std::size_t j = 0; j < len; ++j) {
      inv_sqrt[j] += binom * power[j];
    }
  }
  std::vector<Vector> out(len, Vector::Zero(vectors.front().size()));
  for (std::size_t j = 0; j < len; ++j) {
    for (std::size_t l = 0; l <= j; ++l) {
      out[j] += inv_sqrt[l] * vectors[j - l];
    }
  }
  return out;
}

bool EigSeries::has_persistent_degeneracy() const {
  return std::any_of(branches.begin(), branches.end(),
                     [](const EigBranch& b) { return b.persistent_degeneracy; });
}

EigSeries perturbative_eig(const OmegaSeries& c_series, int order,
                           const PerturbativeEigOptions& options) {
  if (order < 0 || c_series.coeffs().empty()) {
    throw std::invalid_argument("perturbative_eig: empty series or negative order");
  }
  const OmegaSeries truncated = c_series.truncated(order);
  const Eigen::Index m = truncated.coeff(0).rows();
  double scale = 0.0;
  MatSeries c;
  for (const auto& d : truncated.coeffs()) {
    if (!is_hermitian(d, 1e-10)) {
      throw NotHermitian("perturbative_eig: coefficient is not Hermitian");
    }
    c.push_back(hermitian_part(d));
    scale = std::max(scale, d.norm());
  }
  const int extra = options.extra_orders.value_or(static_cast<int>(m));
  const auto len = static_cast<std::size_t>(order + 1 + extra);

  EigSeries out;
  out.order = order;
  out.zero_tolerance = 1e-11 * scale;
  const double tol = options.degeneracy_tol * std::max(scale, std::numeric_limits<double>::min());

  std::vector<RawBranch> raw;
  if (scale == 0.0) {
    for (Eigen::Index i = 0; i < m; ++i) {
      std::vector<Vector> vecs(len, Vector::Zero(m));
      vecs[0](i) = 1.0;
      raw.push_back({std::vector<double>(len, 0.0), vecs, m > 1});
    }
  } else {
    raw = expand(c, len, tol);
  }

  const auto keep = static_cast<std::size_t>(order + 1);
  for (auto& r : raw) {
    EigBranch b;
    b.values.assign(r.values.begin(), r.values.begin() + static_cast<std::ptrdiff_t>(keep));
    b.persistent_degeneracy = r.persistent;
    // Intermediate normalization: divide by <Phi0|Phi(x)> = 1 + O(x).
    const Vector phi0 = r.vectors[0];
    std::vector<Complex> s(keep);
    for (std::size_t j = 0; j < keep; ++j) {
      s[j] = phi0.dot(r.vectors[j]);
    }
    std::vector<Complex> inv(keep, Complex(0.0, 0.0));
    inv[0] = 1.0 / s[0];
    for (std::size_t j = 1; j < keep; ++j) {
      Complex acc(0.0, 0.0);
      for (std::size_t l = 1; l <= j; ++l) {
        acc += s[l] * inv[j - l];
      }
      inv[j] = -acc / s[0];
    }
    b.vectors.assign(keep, Vector::Zero(m));
    for (std::size_t j = 0; j < keep; ++j) {
      for (std::size_t l = 0; l <= j; ++l) {
        b.vectors[j] += inv[l] * r.vectors[j - l];
      }
    }
    Vector phased = b.vectors[0];
    fix_phase(phased);
    Eigen::Index arg = 0;
    b.vectors[0].cwiseAbs().maxCoeff(&arg);
    const Complex rot = std::abs(b.vectors[0](arg)) > 0.0
                            ? phased(arg) / b.vectors[0](arg)
                            : Complex(1.0, 0.0);
    for (auto& v : b.vectors) {
      v *= rot;
    }
    out.branches.push_back(std::move(b));
  }

  const double zt = out.zero_tolerance;
  std::stable_sort(out.branches.begin(), out.branches.end(),
                   [zt](const EigBranch& a, const EigBranch& b) {
                     const auto ja = a.leading_order(zt);
                     const auto jb = b.leading_order(zt);
                     const int oa = ja.value_or(std::numeric_limits<int>::max());
                     const int ob = jb.value_or(std::numeric_limits<int>::max());
                     if (oa != ob) {
                       return oa < ob;
                     }
                     if (!ja) {
                       return false;
                     }
                     return a.values[static_cast<std::size_t>(*ja)] >
                            b.values[static_cast<std::size_t>(*jb)];
                   });
  return out;
}

double SquareCompletion::evaluate(double x) const {
  double out = 0.0;
  for (auto it = polynomial.rbegin(); it != polynomial.rend(); ++it) {
    out = out * x + *it;
  }
  return out;
}

bool SquareCompletion::unchanged(const std::vector<double>& mu, double tol) const {
  const std::size_t n = std::max(mu.size(), polynomial.size());
  for (std::size_t j = 0; j < n; ++j) {
    const double a = j < mu.size() ? mu[j] : 0.0;
    const double b = j < polynomial.size() ? polynomial[j] : 0.0;
    if (std::abs(a - b) > tol) {
      return false;
    }
  }
  return true;
}

SquareCompletion square_complete(const std::vector<double>& mu, int order, double zero_tol,
                                 std::size_t eigen_index) {
  if (order < 0 || mu.size() < static_cast<std::size_t>(order) + 1) {
    throw std::invalid_argument("square_complete: need coefficients mu_0 .. mu_n");
  }
  SquareCompletion out;
  for (int j = 0; j <= order; ++j) {
    if (std::abs(mu[static_cast<std::size_t>(j)]) > zero_tol) {
      out.leading_order = j;
      break;
    }
  }
  if (!out.leading_order) {
    out.polynomial = {0.0};
    return out;
  }
  const int j0 = *out.leading_order;
  const double lead = mu[static_cast<std::size_t>(j0)];
  if (lead < 0.0) {
    throw CorrectionImpossible(eigen_index, j0, lead);
  }
  const int terms = order - j0 + 1;
  out.half.assign(static_cast<std::size_t>(terms), 0.0);
  out.half[0] = std::sqrt(lead);
  for (int k = 1; k < terms; ++k) {
    double acc = mu[static_cast<std::size_t>(j0 + k)];
    for (int l = 1; l < k; ++l) {
      acc -= out.half[static_cast<std::size_t>(l)] * out.half[static_cast<std::size_t>(k - l)];
    }
    out.half[static_cast<std::size_t>(k)] = acc / (2.0 * out.half[0]);
  }
  out.polynomial.assign(static_cast<std::size_t>(j0 + 2 * (terms - 1) + 1), 0.0);
  for (int a = 0; a < terms; ++a) {
    for (int b = 0; b < terms; ++b) {
      out.polynomial[static_cast<std::size_t>(j0 + a + b)] +=
          out.half[static_cast<std::size_t>(a)] * out.half[static_cast<std::size_t>(b)];
    }
  }
  return out;
}

std::vector<SquareCompletion> complete_all(const EigSeries& eig) {
  std::vector<SquareCompletion> out;
  out.reserve(eig.branches.size());
  for (std::size_t i = 0; i < eig.branches.size(); ++i) {
    out.push_back(square_complete(eig.branches[i].values, eig.order, eig.zero_tolerance, i));
  }
  return out;
}

Matrix reconstruct(const EigSeries& eig, const std::vector<SquareCompletion>& completions,
                   double omega, EigenvectorConvention convention) {
  if (!(omega > 0.0)) {
    throw std::invalid_argument("reconstruct: omega must be positive");
  }
  const double x = 1.0 / omega;
  const Eigen::Index m = eig.branches.front().vectors.front().size();
  Matrix out = Matrix::Zero(m, m);
  for (std::size_t i = 0; i < eig.branches.size(); ++i) {
    const auto& br = eig.branches[i];
    Vector phi;
    switch (convention) {
      case EigenvectorConvention::kIntermediate:
        phi = br.vector_at(x);
        break;
      case EigenvectorConvention::kSeriesNormalized: {
        EigBranch normalized = br;
        normalized.vectors = br.series_normalized_vectors();
        phi = normalized.vector_at(x);
        break;
      }
      case EigenvectorConvention::kNumericallyNormalized:
        phi = br.vector_at(x).normalized();
        break;
    }
    out += completions[i].evaluate(x) * (phi * phi.adjoint());
  }
  return hermitian_part(out);
}

CorrectedCoefficient corrected_coefficient(const OmegaSeries& c_series, int order, double omega,
                                           EigenvectorConvention convention) {
  if (!(omega > 0.0)) {
    throw std::invalid_argument("corrected_coefficient: omega must be positive");
  }
  CorrectedCoefficient out;
  out.eig = perturbative_eig(c_series, order);
  out.completions = complete_all(out.eig);
  out.c_tilde = reconstruct(out.eig, out.completions, omega, convention);
  for (std::size_t i = 0; i < out.completions.size(); ++i) {
    out.lambda_tilde.push_back(out.completions[i].evaluate(1.0 / omega));
    if (!out.completions[i].unchanged(out.eig.branches[i].values, out.eig.zero_tolerance)) {
      out.correction_needed = true;
    }
  }
  return out;
}

CorrectedGenerator corrected_generator(const LindbladDecomposition& dec, int order, double omega,
                                       EigenvectorConvention convention) {
  if (order < 0 || order > dec.order()) {
    throw std::invalid_argument("corrected_generator: order exceeds the decomposition");
  }
  const OmegaSeries c_n = dec.c_series.truncated(order);
  const Matrix h = hermitian_part(dec.h_series.truncated(order).evaluate(omega));
  CorrectedGenerator out{SuperOp(), SuperOp(),
                         corrected_coefficient(c_n, order, omega, convention)};
  out.corrected = assemble_lindblad(h, out.coefficient.c_tilde, dec.basis_ops);
  out.uncorrected = assemble_lindblad(h, hermitian_part(c_n.evaluate(omega)), dec.basis_ops);
  return out;
}

CorrectedGenerator corrected_generator(const DrivenModel& model, int order, double omega) {
  if (order < 0 || order > kMaxMagnusOrder) {
    throw std::invalid_argument("corrected_generator: order must be in 0..3");
  }
  return corrected_generator(decompose(model, order), order, omega);
}

}  // namespace cpmagnus
