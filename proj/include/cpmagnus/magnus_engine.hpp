#pragma once

// Closed-form Magnus expansion of a periodic Liouvillian.
//
// Integrands are carried as trigonometric polynomials with matrix
// coefficients, sum t^p e^{i k w t} w^q M, so that every antiderivative is
// exact and the powers of 1/w produced by integration are kept apart. At
// t = T = 2 pi / w all phases are 1 and M_i(T) / T becomes a polynomial in
// x = 1/w.

#include <compare>
#include <cstddef>
#include <map>
#include <optional>
#include <vector>

#include "cpmagnus/model_spec.hpp"
#include "cpmagnus/operator_algebra.hpp"

namespace cpmagnus {

/// Laurent polynomial sum_p c_p w^p.
class OmegaScalar {
 public:
  OmegaScalar() = default;
  OmegaScalar(Complex c);  // NOLINT: constants promote implicitly
  static OmegaScalar monomial(int power, Complex c = 1.0);

  const std::map<int, Complex>& coeffs() const { return coeffs_; }
  Complex coeff(int power) const;
  Complex evaluate(double omega) const;
  bool is_zero() const { return coeffs_.empty(); }

  OmegaScalar& operator+=(const OmegaScalar& o);
  OmegaScalar& operator*=(const OmegaScalar& o);
  friend OmegaScalar operator+(OmegaScalar a, const OmegaScalar& b) { return a += b; }
  friend OmegaScalar operator*(OmegaScalar a, const OmegaScalar& b) { return a *= b; }
  OmegaScalar operator-() const;

 private:
  void add(int power, Complex c);
  std::map<int, Complex> coeffs_;
};

/// Power series in x = 1/w with matrix coefficients, truncated at `order`.
class OmegaSeries {
 public:
  OmegaSeries() = default;
  OmegaSeries(std::vector<Matrix> coeffs);  // NOLINT

  /// Builds from a map power-of-w -> matrix. Throws std::logic_error if a
  /// positive power of w carries a nonzero matrix.
  static OmegaSeries from_omega_powers(const std::map<int, Matrix>& by_omega_power,
                                       std::size_t rows, std::size_t cols,
                                       std::optional<int> truncate_order = std::nullopt);

  int order() const { return static_cast<int>(coeffs_.size()) - 1; }
  const std::vector<Matrix>& coeffs() const { return coeffs_; }
  const Matrix& coeff(int power) const { return coeffs_.at(static_cast<std::size_t>(power)); }

  Matrix evaluate(double omega) const;
  OmegaSeries truncated(int order) const;

  OmegaSeries& operator+=(const OmegaSeries& o);
  friend OmegaSeries operator+(OmegaSeries a, const OmegaSeries& b) { return a += b; }

 private:
  std::vector<Matrix> coeffs_;
};

struct TrigKey {
  int t_power = 0;   // p >= 0
  int harmonic = 0;  // k
  int omega_power = 0;  // q

  /// Power of x = 1/w this term contributes to M(T)/T.
  int grade() const { return t_power - omega_power; }
  auto operator<=>(const TrigKey&) const = default;
};

/// sum over keys of t^p e^{i k w t} w^q M_{p,k,q}.
class TrigPolyMatrix {
 public:
  TrigPolyMatrix() = default;
  TrigPolyMatrix(Eigen::Index rows, Eigen::Index cols) : rows_(rows), cols_(cols) {}

  static TrigPolyMatrix constant(const Matrix& m);
  static TrigPolyMatrix cos_term(int k, const Matrix& m);
  static TrigPolyMatrix sin_term(int k, const Matrix& m);
  static TrigPolyMatrix from_liouvillian(const LiouvillianFourier& l);

  Eigen::Index rows() const { return rows_; }
  Eigen::Index cols() const { return cols_; }
  const std::map<TrigKey, Matrix>& terms() const { return terms_; }
  std::size_t size() const { return terms_.size(); }

  void add_term(const TrigKey& key, const Matrix& m);

  TrigPolyMatrix& operator+=(const TrigPolyMatrix& o);
  TrigPolyMatrix& operator-=(const TrigPolyMatrix& o);
  TrigPolyMatrix& operator*=(Complex s);
  friend TrigPolyMatrix operator+(TrigPolyMatrix a, const TrigPolyMatrix& b) { return a += b; }
  friend TrigPolyMatrix operator-(TrigPolyMatrix a, const TrigPolyMatrix& b) { return a -= b; }
  friend TrigPolyMatrix operator*(Complex s, TrigPolyMatrix a) { return a *= s; }

  /// Product; terms of grade above max_grade are dropped when given.
  TrigPolyMatrix multiply(const TrigPolyMatrix& o,
                          std::optional<int> max_grade = std::nullopt) const;
  friend TrigPolyMatrix operator*(const TrigPolyMatrix& a, const TrigPolyMatrix& b) {
    return a.multiply(b);
  }

  TrigPolyMatrix pruned(int max_grade) const;

  Matrix evaluate(double t, double omega) const;

  /// F(t) / T at t = T, as a series in x = 1/w (nonpositive powers of w only).
  OmegaSeries at_period_over_period(std::optional<int> truncate_order = std::nullopt) const;

 private:
  Eigen::Index rows_ = 0;
  Eigen::Index cols_ = 0;
  std::map<TrigKey, Matrix> terms_;
};

TrigPolyMatrix commutator(const TrigPolyMatrix& a, const TrigPolyMatrix& b,
                          std::optional<int> max_grade = std::nullopt);

/// Exact antiderivative with F(0) = 0.
TrigPolyMatrix tp_integrate(const TrigPolyMatrix& f);

/// Coefficients of the antiderivative of t^p e^{i k w t} (k != 0) vanishing
/// at zero, as (t_power, harmonic, omega-power coefficient) triples.
struct TrigIntegralTerm {
  int t_power;
  int harmonic;
  OmegaScalar weight;
};
std::vector<TrigIntegralTerm> trig_monomial_integral(int p, int k);

inline constexpr int kMaxMagnusOrder = 3;

/// M_0(t) ... M_n(t) as trigonometric polynomials. With max_grade set,
/// terms that can only feed powers of x above max_grade - 1 are dropped
/// during the recursion.
std::vector<TrigPolyMatrix> magnus_generators(const PeriodicLindbladGenerator& gen, int order,
                                              std::optional<int> max_grade = std::nullopt);

/// M_i(T) / T for i = 0..order as series in x. Untruncated unless
/// truncate_order is given.
std::vector<OmegaSeries> magnus_terms(const PeriodicLindbladGenerator& gen, int order,
                                      std::optional<int> truncate_order = std::nullopt);

/// L_n(T) / T = sum_{i<=n} M_i(T) / T, truncated at x^n.
OmegaSeries effective_series(const PeriodicLindbladGenerator& gen, int order);

}  // namespace cpmagnus
