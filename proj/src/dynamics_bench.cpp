#include "cpmagnus/dynamics_bench.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <boost/numeric/odeint.hpp>

#include "cpmagnus/cp_correction.hpp"
#include "cpmagnus/lindblad_projection.hpp"

namespace cpmagnus {

namespace {

using State = std::vector<double>;  // interleaved real/imag parts of V^T

/// Nonzero pattern of L(t) = L0 + sum_k cos(k w t) Lc_k + sin(k w t) Ls_k with
/// one coefficient per Fourier component at each entry.
struct SparseLiouvillian {
  std::vector<double> k_omega;
  std::vector<Eigen::Index> rows;
  std::vector<Eigen::Index> cols;
  // values[e * (1 + 2K) + 0] constant, then (cos, sin) per harmonic.
  std::vector<Complex> values;

  explicit SparseLiouvillian(const LiouvillianFourier& lf) {
    std::vector<const Matrix*> parts{&lf.constant.mat};
    for (const auto& h : lf.harmonics) {
      k_omega.push_back(h.k * lf.omega);
      parts.push_back(&h.cos_part.mat);
      parts.push_back(&h.sin_part.mat);
    }
    const Eigen::Index n = lf.constant.mat.rows();
    for (Eigen::Index c = 0; c < n; ++c) {
      for (Eigen::Index r = 0; r < n; ++r) {
        bool nonzero = false;
        for (const auto* p : parts) {
          nonzero = nonzero || (*p)(r, c) != Complex(0.0, 0.0);
        }
        if (!nonzero) {
          continue;
        }
        rows.push_back(r);
        cols.push_back(c);
        for (const auto* p : parts) {
          values.push_back((*p)(r, c));
        }
      }
    }
  }
};

// W' = W L(t)^T with W = V^T, so each nonzero L(r, c) is one column axpy.
class Rhs {
 public:
  Rhs(const SparseLiouvillian& l, Eigen::Index n, std::size_t* evals)
      : l_(l), n_(n), evals_(evals), phase_(1 + 2 * l.k_omega.size()) {}

  void operator()(const State& x, State& dxdt, double t) const {
    Eigen::Map<const Matrix> w(reinterpret_cast<const Complex*>(x.data()), n_, n_);
    Eigen::Map<Matrix> dw(reinterpret_cast<Complex*>(dxdt.data()), n_, n_);
    const std::size_t stride = phase_.size();
    phase_[0] = 1.0;
    for (std::size_t k = 0; k < l_.k_omega.size(); ++k) {
      phase_[1 + 2 * k] = std::cos(l_.k_omega[k] * t);
      phase_[2 + 2 * k] = std::sin(l_.k_omega[k] * t);
    }
    dw.setZero();
    for (std::size_t e = 0; e < l_.rows.size(); ++e) {
      Complex a(0.0, 0.0);
      for (std::size_t p = 0; p < stride; ++p) {
        a += phase_[p] * l_.values[e * stride + p];
      }
      dw.col(l_.rows[e]) += a * w.col(l_.cols[e]);
    }
    ++*evals_;
  }

 private:
  const SparseLiouvillian& l_;
  Eigen::Index n_;
  std::size_t* evals_;
  mutable std::vector<double> phase_;
};

State identity_state(Eigen::Index n) {
  State x(static_cast<std::size_t>(2 * n * n), 0.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    x[static_cast<std::size_t>(2 * (i + i * n))] = 1.0;
  }
  return x;
}

Matrix state_matrix(const State& x, Eigen::Index n) {
  return Eigen::Map<const Matrix>(reinterpret_cast<const Complex*>(x.data()), n, n).transpose();
}

/// Integrates from 0 through the ascending times, returning V at each.
std::vector<Matrix> integrate(const SparseLiouvillian& l, Eigen::Index n,
                              const std::vector<double>& times, const IntegratorOptions& options,
                              IntegratorStats& stats) {
  namespace odeint = boost::numeric::odeint;
  std::vector<Matrix> out;
  out.reserve(times.size());
  if (times.empty()) {
    return out;
  }
  State x = identity_state(n);
  Rhs rhs(l, n, &stats.rhs_evaluations);
  auto stepper = odeint::make_controlled(options.tol, options.tol,
                                         odeint::runge_kutta_dopri5<State>());
  std::vector<double> grid;
  grid.reserve(times.size() + 1);
  if (times.front() > 0.0) {
    grid.push_back(0.0);
  }
  grid.insert(grid.end(), times.begin(), times.end());
  const bool skip_origin = times.front() > 0.0;
  std::size_t seen = 0;
  double t_last = 0.0;
  const auto observer = [&](const State& s, double t) {
    t_last = t;
    if (skip_origin && seen++ == 0) {
      return;
    }
    out.push_back(state_matrix(s, n));
  };
  const double span = grid.back() - grid.front();
  const double dt0 = span > 0.0 ? std::min(1e-3, span * 1e-3) : 1e-3;
  try {
    stats.steps += odeint::integrate_times(stepper, std::ref(rhs), x, grid.begin(), grid.end(),
                                           dt0, observer,
                                           odeint::max_step_checker(static_cast<int>(
                                               std::min<std::size_t>(options.max_steps,
                                                                     1u << 30))));
  } catch (const odeint::odeint_error& e) {
    std::ostringstream msg;
    msg << "integrator failed near t = " << t_last << " (" << e.what()
        << "); the Liouvillian may be too stiff for tol = " << options.tol;
    throw IntegratorFailure(msg.str(), t_last);
  }
  stats.t_end = std::max(stats.t_end, grid.back());
  return out;
}

void check_times(const std::vector<double>& times) {
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!(times[i] >= 0.0) || !std::isfinite(times[i])) {
      throw std::invalid_argument("times must be finite and nonnegative");
    }
    if (i > 0 && times[i] < times[i - 1]) {
      throw std::invalid_argument("times must be ascending");
    }
  }
}

Matrix matrix_power(const Matrix& m, long long n) {
  Matrix result = Matrix::Identity(m.rows(), m.cols());
  Matrix base = m;
  while (n > 0) {
    if (n & 1) {
      result = result * base;
    }
    n >>= 1;
    if (n > 0) {
      base = base * base;
    }
  }
  return result;
}

}  // namespace

std::vector<SuperOp> exact_propagator(const PeriodicLindbladGenerator& gen,
                                      const std::vector<double>& times,
                                      const IntegratorOptions& options, IntegratorStats* stats) {
  if (!(options.tol >= 1e-13)) {
    throw std::invalid_argument("exact_propagator: tolerance must be at least 1e-13");
  }
  check_times(times);
  const LiouvillianFourier lf = liouvillian_fourier(gen);
  const SparseLiouvillian l(lf);
  const Eigen::Index n = lf.constant.mat.rows();
  const std::size_t d = gen.dim();
  IntegratorStats local;
  IntegratorStats& st = stats ? *stats : local;

  std::vector<SuperOp> out;
  out.reserve(times.size());
  if (!options.compose) {
    for (auto& m : integrate(l, n, times, options, st)) {
      out.emplace_back(d, std::move(m));
    }
    return out;
  }

  // Split t = m T + s and integrate over the distinct s plus one full period.
  const double period = gen.period();
  std::vector<long long> whole(times.size());
  std::vector<double> frac(times.size());
  for (std::size_t i = 0; i < times.size(); ++i) {
    auto m = static_cast<long long>(std::floor(times[i] / period));
    double s = times[i] - static_cast<double>(m) * period;
    if (s >= period * (1.0 - 1e-12)) {
      ++m;
      s = 0.0;
    } else if (s < period * 1e-12) {
      s = 0.0;
    }
    whole[i] = m;
    frac[i] = s;
  }
  std::vector<double> inner = frac;
  inner.push_back(period);
  std::sort(inner.begin(), inner.end());
  inner.erase(std::unique(inner.begin(), inner.end()), inner.end());
  const std::vector<Matrix> v_inner = integrate(l, n, inner, options, st);
  const Matrix& v_period = v_inner.back();

  std::map<long long, Matrix> powers;
  for (std::size_t i = 0; i < times.size(); ++i) {
    auto it = powers.find(whole[i]);
    if (it == powers.end()) {
      it = powers.emplace(whole[i], matrix_power(v_period, whole[i])).first;
    }
    const auto pos = std::lower_bound(inner.begin(), inner.end(), frac[i]) - inner.begin();
    out.emplace_back(d, v_inner[static_cast<std::size_t>(pos)] * it->second);
  }
  return out;
}

SuperOp generator_propagator(const SuperOp& g, double t) {
  return SuperOp(g.dim, matrix_exp(t * g.mat));
}

std::vector<SuperOp> generator_propagators(const SuperOp& g, const std::vector<double>& times) {
  check_times(times);
  std::vector<SuperOp> out;
  out.reserve(times.size());
  bool uniform = times.size() > 2 && times.front() == 0.0;
  const double step = uniform ? times[1] : 0.0;
  for (std::size_t i = 1; uniform && i < times.size(); ++i) {
    uniform = std::abs(times[i] - static_cast<double>(i) * step) <= 1e-12 * times.back();
  }
  if (!uniform) {
    for (double t : times) {
      out.push_back(generator_propagator(g, t));
    }
    return out;
  }
  const Matrix e = matrix_exp(step * g.mat);
  Matrix v = Matrix::Identity(g.mat.rows(), g.mat.cols());
  out.emplace_back(g.dim, v);
  for (std::size_t i = 1; i < times.size(); ++i) {
    v = e * v;
    out.emplace_back(g.dim, v);
  }
  return out;
}

SubspaceProjector::SubspaceProjector(const Matrix& projector) : p(projector) {
  if (p.rows() != p.cols()) {
    throw DimensionMismatch("SubspaceProjector: projector must be square");
  }
  const double scale = std::max(1.0, p.norm());
  if ((p * p - p).norm() > 1e-10 * scale || hermiticity_defect(p) > 1e-10 * scale) {
    throw std::invalid_argument("SubspaceProjector: not an orthogonal projector");
  }
  pi = left_right_super(p, p);
}

SubspaceProjector SubspaceProjector::lowest(std::size_t d, std::size_t k) {
  if (k == 0 || k > d) {
    throw std::invalid_argument("SubspaceProjector::lowest: need 0 < k <= d");
  }
  Matrix p = Matrix::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < k; ++i) {
    p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = 1.0;
  }
  return SubspaceProjector(p);
}

double deviation(const SuperOp& v, const SuperOp& v_approx,
                 const std::optional<SubspaceProjector>& proj) {
  if (v.dim != v_approx.dim || v.mat.rows() != v_approx.mat.rows()) {
    throw DimensionMismatch("deviation: propagators differ in dimension");
  }
  Matrix diff = v.mat - v_approx.mat;
  if (proj) {
    if (proj->pi.mat.rows() != diff.rows()) {
      throw DimensionMismatch("deviation: projector dimension mismatch");
    }
    diff = proj->pi.mat * diff * proj->pi.mat;
  }
  const double norm = diff.norm();
  if (!(norm > 0.0)) {
    return kDeviationFloor;
  }
  return std::max(kDeviationFloor, std::log10(norm));
}

Matrix choi_matrix(const SuperOp& v) {
  const auto d = static_cast<Eigen::Index>(v.dim);
  Matrix choi(d * d, d * d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      for (Eigen::Index k = 0; k < d; ++k) {
        for (Eigen::Index l = 0; l < d; ++l) {
          choi(i * d + k, j * d + l) = v.mat(k + l * d, i + j * d);
        }
      }
    }
  }
  return choi;
}

double choi_min_eig(const SuperOp& v) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(hermitian_part(choi_matrix(v)),
                                               Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

std::vector<double> population_trace(const std::vector<SuperOp>& propagators, const Matrix& rho0,
                                     const Matrix& observable) {
  std::vector<double> out;
  out.reserve(propagators.size());
  const Vector r = vec(rho0);
  // Tr(O rho) = vec(O^+)^+ vec(rho).
  const Vector o = vec(Matrix(observable.adjoint()));
  for (const auto& v : propagators) {
    if (v.mat.cols() != r.size()) {
      throw DimensionMismatch("population_trace: state dimension mismatch");
    }
    out.push_back(o.dot(v.mat * r).real());
  }
  return out;
}

std::vector<double> period_grid(double period, int n_periods, int samples_per_period) {
  if (!(period > 0.0) || n_periods < 0 || samples_per_period < 1) {
    throw std::invalid_argument("period_grid: invalid grid");
  }
  std::vector<double> out;
  const int total = n_periods * samples_per_period;
  out.reserve(static_cast<std::size_t>(total) + 1);
  for (int k = 0; k <= total; ++k) {
    out.push_back(period * static_cast<double>(k) / samples_per_period);
  }
  return out;
}

PropagatorSet build_propagator_set(const DrivenModel& model, const std::vector<int>& orders,
                                   const std::vector<double>& times,
                                   const IntegratorOptions& options, IntegratorStats* stats) {
  PropagatorSet out;
  out.times = times;
  out.exact = exact_propagator(model.generator(), times, options, stats);
  for (int n : orders) {
    const auto g = corrected_generator(model, n, model.omega());
    out.magnus[n] = generator_propagators(g.uncorrected, times);
    out.corrected[n] = generator_propagators(g.corrected, times);
  }
  return out;
}

Matrix ground_projector(const DrivenModel& model) {
  const auto d = static_cast<Eigen::Index>(model.levels());
  const auto g = static_cast<Eigen::Index>(model.ground_index());
  Matrix p = Matrix::Zero(d, d);
  p(g, g) = 1.0;
  return p;
}

BenchmarkResult run_benchmark(const DrivenModel& model, const BenchmarkSpec& spec) {
  BenchmarkResult out;
  const double period = model.generator().period();
  const std::vector<double> times = period_grid(period, spec.n_periods, spec.samples_per_period);
  for (double t : times) {
    out.t_over_T.push_back(t / period);
  }
  const Matrix rho0 = spec.rho0.size() > 0 ? spec.rho0 : ground_projector(model);
  const Matrix obs = spec.observable.size() > 0 ? spec.observable : ground_projector(model);
  std::optional<SubspaceProjector> proj;
  if (spec.subspace) {
    proj = SubspaceProjector::lowest(model.levels(), *spec.subspace);
  }

  const auto exact = exact_propagator(model.generator(), times, spec.integrator, &out.stats);
  out.population_exact = population_trace(exact, rho0, obs);
  // Orders are processed one at a time so only one set of propagators is held.
  for (int n : spec.orders) {
    const auto g = corrected_generator(model, n, model.omega());
    for (const bool corrected : {false, true}) {
      const auto props = generator_propagators(corrected ? g.corrected : g.uncorrected, times);
      auto& pop = corrected ? out.population_corrected[n] : out.population_magnus[n];
      auto& dev = corrected ? out.d_tilde[n] : out.d[n];
      pop = population_trace(props, rho0, obs);
      for (std::size_t i = 0; i < times.size(); ++i) {
        dev.push_back(deviation(exact[i], props[i], proj));
      }
    }
  }
  return out;
}

}  // namespace cpmagnus
