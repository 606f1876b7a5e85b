#include "cpmagnus/magnus_engine.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace cpmagnus {

// ---------------------------------------------------------------- OmegaScalar

OmegaScalar::OmegaScalar(Complex c) { add(0, c); }

OmegaScalar OmegaScalar::monomial(int power, Complex c) {
  OmegaScalar s;
  s.add(power, c);
  return s;
}

void OmegaScalar::add(int power, Complex c) {
  if (c == Complex(0.0, 0.0)) {
    return;
  }
  auto [it, inserted] = coeffs_.try_emplace(power, c);
  if (!inserted) {
    it->second += c;
    if (it->second == Complex(0.0, 0.0)) {
      coeffs_.erase(it);
    }
  }
}

Complex OmegaScalar::coeff(int power) const {
  const auto it = coeffs_.find(power);
  return it == coeffs_.end() ? Complex(0.0, 0.0) : it->second;
}

Complex OmegaScalar::evaluate(double omega) const {
  Complex out(0.0, 0.0);
  for (const auto& [p, c] : coeffs_) {
    out += c * std::pow(omega, p);
  }
  return out;
}

OmegaScalar& OmegaScalar::operator+=(const OmegaScalar& o) {
  for (const auto& [p, c] : o.coeffs_) {
    add(p, c);
  }
  return *this;
}

OmegaScalar& OmegaScalar::operator*=(const OmegaScalar& o) {
  OmegaScalar out;
  for (const auto& [p1, c1] : coeffs_) {
    for (const auto& [p2, c2] : o.coeffs_) {
      out.add(p1 + p2, c1 * c2);
    }
  }
  *this = std::move(out);
  return *this;
}

OmegaScalar OmegaScalar::operator-() const {
  OmegaScalar out;
  for (const auto& [p, c] : coeffs_) {
    out.add(p, -c);
  }
  return out;
}

// ---------------------------------------------------------------- OmegaSeries

OmegaSeries::OmegaSeries(std::vector<Matrix> coeffs) : coeffs_(std::move(coeffs)) {
  for (const auto& c : coeffs_) {
    if (c.rows() != coeffs_.front().rows() || c.cols() != coeffs_.front().cols()) {
      throw DimensionMismatch("OmegaSeries: coefficient shapes differ");
    }
  }
}

OmegaSeries OmegaSeries::from_omega_powers(const std::map<int, Matrix>& by_omega_power,
                                           std::size_t rows, std::size_t cols,
                                           std::optional<int> truncate_order) {
  int max_order = 0;
  double scale = 0.0;
  for (const auto& [q, m] : by_omega_power) {
    scale = std::max(scale, m.norm());
  }
  for (const auto& [q, m] : by_omega_power) {
    if (q > 0) {
      if (m.norm() > 1e-12 * std::max(1.0, scale)) {
        std::ostringstream msg;
        msg << "effective generator carries a positive power w^" << q
            << " (norm " << m.norm() << ")";
        throw std::logic_error(msg.str());
      }
      continue;
    }
    max_order = std::max(max_order, -q);
  }
  if (truncate_order) {
    max_order = *truncate_order;
  }
  const auto r = static_cast<Eigen::Index>(rows);
  const auto c = static_cast<Eigen::Index>(cols);
  std::vector<Matrix> coeffs(static_cast<std::size_t>(max_order) + 1, Matrix::Zero(r, c));
  for (const auto& [q, m] : by_omega_power) {
    if (q <= 0 && -q <= max_order) {
      coeffs[static_cast<std::size_t>(-q)] += m;
    }
  }
  return OmegaSeries(std::move(coeffs));
}

Matrix OmegaSeries::evaluate(double omega) const {
  if (coeffs_.empty()) {
    return Matrix();
  }
  // Horner in x = 1/w.
  const double x = 1.0 / omega;
  Matrix out = coeffs_.back();
  for (auto it = coeffs_.rbegin() + 1; it != coeffs_.rend(); ++it) {
    out = (out * x + *it).eval();
  }
  return out;
}

OmegaSeries OmegaSeries::truncated(int order) const {
  if (coeffs_.empty()) {
    return *this;
  }
  std::vector<Matrix> out(static_cast<std::size_t>(order) + 1,
                          Matrix::Zero(coeffs_.front().rows(), coeffs_.front().cols()));
  for (std::size_t j = 0; j < out.size() && j < coeffs_.size(); ++j) {
    out[j] = coeffs_[j];
  }
  return OmegaSeries(std::move(out));
}

OmegaSeries& OmegaSeries::operator+=(const OmegaSeries& o) {
  if (coeffs_.empty()) {
    *this = o;
    return *this;
  }
  if (o.coeffs_.empty()) {
    return *this;
  }
  const Matrix zero = Matrix::Zero(coeffs_.front().rows(), coeffs_.front().cols());
  if (o.coeffs_.size() > coeffs_.size()) {
    coeffs_.resize(o.coeffs_.size(), zero);
  }
  for (std::size_t j = 0; j < o.coeffs_.size(); ++j) {
    coeffs_[j] += o.coeffs_[j];
  }
  return *this;
}

// ------------------------------------------------------------- TrigPolyMatrix

TrigPolyMatrix TrigPolyMatrix::constant(const Matrix& m) {
  TrigPolyMatrix out(m.rows(), m.cols());
  out.add_term({0, 0, 0}, m);
  return out;
}

TrigPolyMatrix TrigPolyMatrix::cos_term(int k, const Matrix& m) {
  TrigPolyMatrix out(m.rows(), m.cols());
  out.add_term({0, k, 0}, 0.5 * m);
  out.add_term({0, -k, 0}, 0.5 * m);
  return out;
}

TrigPolyMatrix TrigPolyMatrix::sin_term(int k, const Matrix& m) {
  TrigPolyMatrix out(m.rows(), m.cols());
  out.add_term({0, k, 0}, (-0.5 * kI) * m);
  out.add_term({0, -k, 0}, (0.5 * kI) * m);
  return out;
}

TrigPolyMatrix TrigPolyMatrix::from_liouvillian(const LiouvillianFourier& l) {
  TrigPolyMatrix out = constant(l.constant.mat);
  for (const auto& h : l.harmonics) {
    out += cos_term(h.k, h.cos_part.mat);
    out += sin_term(h.k, h.sin_part.mat);
  }
  return out;
}

void TrigPolyMatrix::add_term(const TrigKey& key, const Matrix& m) {
  if (terms_.empty() && rows_ == 0 && cols_ == 0) {
    rows_ = m.rows();
    cols_ = m.cols();
  }
  if (m.rows() != rows_ || m.cols() != cols_) {
    throw DimensionMismatch("TrigPolyMatrix: term shape mismatch");
  }
  if (key.t_power < 0) {
    throw std::invalid_argument("TrigPolyMatrix: negative power of t");
  }
  if (m.isZero(0.0)) {
    return;
  }
  auto [it, inserted] = terms_.try_emplace(key, m);
  if (!inserted) {
    it->second += m;
  }
}

TrigPolyMatrix& TrigPolyMatrix::operator+=(const TrigPolyMatrix& o) {
  for (const auto& [key, m] : o.terms_) {
    add_term(key, m);
  }
  return *this;
}

TrigPolyMatrix& TrigPolyMatrix::operator-=(const TrigPolyMatrix& o) {
  for (const auto& [key, m] : o.terms_) {
    add_term(key, -m);
  }
  return *this;
}

TrigPolyMatrix& TrigPolyMatrix::operator*=(Complex s) {
  for (auto& [key, m] : terms_) {
    m *= s;
  }
  return *this;
}

TrigPolyMatrix TrigPolyMatrix::multiply(const TrigPolyMatrix& o,
                                        std::optional<int> max_grade) const {
  if (cols_ != o.rows_ && !terms_.empty() && !o.terms_.empty()) {
    throw DimensionMismatch("TrigPolyMatrix: product shape mismatch");
  }
  TrigPolyMatrix out(rows_, o.cols_);
  for (const auto& [k1, m1] : terms_) {
    for (const auto& [k2, m2] : o.terms_) {
      const TrigKey key{k1.t_power + k2.t_power, k1.harmonic + k2.harmonic,
                        k1.omega_power + k2.omega_power};
      if (max_grade && key.grade() > *max_grade) {
        continue;
      }
      auto [it, inserted] = out.terms_.try_emplace(key);
      if (inserted) {
        it->second.noalias() = m1 * m2;
      } else {
        it->second.noalias() += m1 * m2;
      }
    }
  }
  return out;
}

TrigPolyMatrix TrigPolyMatrix::pruned(int max_grade) const {
  TrigPolyMatrix out(rows_, cols_);
  for (const auto& [key, m] : terms_) {
    if (key.grade() <= max_grade) {
      out.terms_.emplace(key, m);
    }
  }
  return out;
}

Matrix TrigPolyMatrix::evaluate(double t, double omega) const {
  Matrix out = Matrix::Zero(rows_, cols_);
  for (const auto& [key, m] : terms_) {
    const Complex w = std::pow(t, key.t_power) * std::exp(kI * (key.harmonic * omega * t)) *
                      std::pow(omega, key.omega_power);
    out += w * m;
  }
  return out;
}

OmegaSeries TrigPolyMatrix::at_period_over_period(std::optional<int> truncate_order) const {
  // t^p e^{ikwT} w^q / T at T = 2 pi / w equals (2 pi)^(p-1) w^(q-p+1).
  std::map<int, Matrix> by_power;
  for (const auto& [key, m] : terms_) {
    const int omega_power = key.omega_power - key.t_power + 1;
    const double factor = std::pow(2.0 * std::numbers::pi, key.t_power - 1);
    auto [it, inserted] = by_power.try_emplace(omega_power, factor * m);
    if (!inserted) {
      it->second += factor * m;
    }
  }
  return OmegaSeries::from_omega_powers(by_power, static_cast<std::size_t>(rows_),
                                        static_cast<std::size_t>(cols_), truncate_order);
}

TrigPolyMatrix commutator(const TrigPolyMatrix& a, const TrigPolyMatrix& b,
                          std::optional<int> max_grade) {
  TrigPolyMatrix out = a.multiply(b, max_grade);
  out -= b.multiply(a, max_grade);
  return out;
}

std::vector<TrigIntegralTerm> trig_monomial_integral(int p, int k) {
  if (p < 0) {
    throw std::invalid_argument("trig_monomial_integral: negative power");
  }
  std::vector<TrigIntegralTerm> out;
  if (k == 0) {
    out.push_back({p + 1, 0, OmegaScalar(1.0 / (p + 1))});
    return out;
  }
  // int_0^t s^p e^{c w s} ds with c = i k:
  //   e^{c w t} sum_j (-1)^j p!/(p-j)! t^(p-j) (c w)^-(j+1)  -  (-1)^p p! (c w)^-(p+1)
  const Complex c = kI * static_cast<double>(k);
  double falling = 1.0;  // p! / (p-j)!
  Complex c_pow = 1.0 / c;
  for (int j = 0; j <= p; ++j) {
    const double sign = (j % 2 == 0) ? 1.0 : -1.0;
    out.push_back({p - j, k, OmegaScalar::monomial(-(j + 1), sign * falling * c_pow)});
    falling *= static_cast<double>(p - j);
    c_pow /= c;
  }
  double factorial = 1.0;
  for (int i = 2; i <= p; ++i) {
    factorial *= i;
  }
  const double sign = (p % 2 == 0) ? 1.0 : -1.0;
  const Complex c_p1 = std::pow(c, -(p + 1));
  out.push_back({0, 0, OmegaScalar::monomial(-(p + 1), -sign * factorial * c_p1)});
  return out;
}

TrigPolyMatrix tp_integrate(const TrigPolyMatrix& f) {
  TrigPolyMatrix out(f.rows(), f.cols());
  for (const auto& [key, m] : f.terms()) {
    for (const auto& term : trig_monomial_integral(key.t_power, key.harmonic)) {
      for (const auto& [q, w] : term.weight.coeffs()) {
        out.add_term({term.t_power, term.harmonic, key.omega_power + q}, w * m);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------- Magnus

std::vector<TrigPolyMatrix> magnus_generators(const PeriodicLindbladGenerator& gen, int order,
                                              std::optional<int> max_grade) {
  if (order < 0 || order > kMaxMagnusOrder) {
    std::ostringstream msg;
    msg << "Magnus order " << order << " outside 0.." << kMaxMagnusOrder;
    throw std::invalid_argument(msg.str());
  }
  const TrigPolyMatrix a = TrigPolyMatrix::from_liouvillian(liouvillian_fourier(gen));
  const auto prune = [&](TrigPolyMatrix f, int limit) {
    return max_grade ? f.pruned(limit) : f;
  };
  const int grade_limit = max_grade.value_or(0);

  // Recursive generator of Magnus terms for Y' = A Y:
  //   O_1 = int A,
  //   O_n = sum_{j=1}^{n-1} B_j / j! int S_n^(j),
  //   S_n^(1) = [O_{n-1}, A],
  //   S_n^(j) = sum_{m=1}^{n-j} [O_m, S_{n-m}^(j-1)],  2 <= j <= n-1,
  // with Bernoulli numbers B_1 = -1/2, B_2 = 1/6, B_3 = 0.
  static constexpr double kBernoulliOverFactorial[] = {1.0, -0.5, 1.0 / 12.0, 0.0,
                                                       -1.0 / 720.0};
  const int n_max = order + 1;
  std::vector<TrigPolyMatrix> omega(static_cast<std::size_t>(n_max) + 1);
  std::map<std::pair<int, int>, TrigPolyMatrix> s;
  const std::optional<int> s_limit =
      max_grade ? std::optional<int>(grade_limit - 1) : std::nullopt;
  omega[1] = prune(tp_integrate(a), grade_limit);
  for (int n = 2; n <= n_max; ++n) {
    s[{n, 1}] = commutator(omega[static_cast<std::size_t>(n - 1)], a, s_limit);
    for (int j = 2; j <= n - 1; ++j) {
      TrigPolyMatrix acc(a.rows(), a.cols());
      for (int m = 1; m <= n - j; ++m) {
        acc += commutator(omega[static_cast<std::size_t>(m)], s.at({n - m, j - 1}), s_limit);
      }
      s[{n, j}] = std::move(acc);
    }
    TrigPolyMatrix integrand(a.rows(), a.cols());
    for (int j = 1; j <= n - 1; ++j) {
      const double w = kBernoulliOverFactorial[j];
      if (w != 0.0) {
        integrand += Complex(w) * s.at({n, j});
      }
    }
    omega[static_cast<std::size_t>(n)] = prune(tp_integrate(integrand), grade_limit);
  }
  return {omega.begin() + 1, omega.end()};
}

std::vector<OmegaSeries> magnus_terms(const PeriodicLindbladGenerator& gen, int order,
                                      std::optional<int> truncate_order) {
  const std::optional<int> max_grade =
      truncate_order ? std::optional<int>(*truncate_order + 1) : std::nullopt;
  const auto generators = magnus_generators(gen, order, max_grade);
  std::vector<OmegaSeries> out;
  out.reserve(generators.size());
  for (const auto& g : generators) {
    if (g.size() == 0) {
      const auto n = static_cast<Eigen::Index>(gen.dim() * gen.dim());
      out.emplace_back(std::vector<Matrix>(
          static_cast<std::size_t>(truncate_order.value_or(0)) + 1, Matrix::Zero(n, n)));
      continue;
    }
    out.push_back(g.at_period_over_period(truncate_order));
  }
  return out;
}

OmegaSeries effective_series(const PeriodicLindbladGenerator& gen, int order) {
  OmegaSeries out;
  for (const auto& term : magnus_terms(gen, order, order)) {
    out += term;
  }
  return out.truncated(order);
}

}  // namespace cpmagnus
