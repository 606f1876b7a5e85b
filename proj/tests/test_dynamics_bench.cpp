#include <doctest.h>

#include <random>

#include "cpmagnus/cp_correction.hpp"
#include "cpmagnus/dynamics_bench.hpp"
#include "oracles.hpp"

using namespace cpmagnus;

namespace {

PeriodicLindbladGenerator static_generator(const Matrix& h, double gamma) {
  return PeriodicLindbladGenerator(FourierOperator{h, {}, 1.0},
                                   DissipatorSpec{{pauli::z()}, gamma * Matrix::Ones(1, 1)});
}

}  // namespace

TEST_CASE("exact propagator of a constant generator is the matrix exponential") {
  const Matrix h = 0.4 * pauli::x() + 0.3 * pauli::z();
  const auto gen = static_generator(h, 0.2);
  const SuperOp l = build_liouvillian(gen, 0.0);
  for (bool compose : {true, false}) {
    IntegratorOptions opts;
    opts.compose = compose;
    const auto v = exact_propagator(gen, {0.0, 1.0, 7.5}, opts);
    REQUIRE(v.size() == 3);
    CHECK((v[0].mat - SuperOp::identity(2).mat).norm() < 1e-14);
    CHECK((v[1].mat - matrix_exp(l.mat)).norm() < 1e-9);
    CHECK((v[2].mat - matrix_exp(7.5 * l.mat)).norm() < 1e-9);
  }
}

TEST_CASE("exact propagator agrees with an RK4 oracle for a driven model") {
  const auto gen = two_level_model(0.7, 0.3, 0.2, 0.1, 2.0);
  const LiouvillianFourier lf = liouvillian_fourier(gen);
  const double t_end = 1.3 * gen.period();
  const Matrix ref = oracle::rk4_propagator([&](double t) { return Matrix(lf.evaluate(t).mat); },
                                            t_end, 20000);
  IntegratorStats stats;
  const auto v = exact_propagator(gen, {t_end}, {}, &stats);
  CHECK((v[0].mat - ref).norm() < 1e-9);
  CHECK(stats.steps > 0);
  CHECK(stats.t_end == doctest::Approx(gen.period()));  // compose mode integrates one period
}

TEST_CASE("compose and direct modes agree over many periods") {
  const auto gen = two_level_model(0.5, 0.2, 0.3, 0.05, 3.0);
  const auto times = period_grid(gen.period(), 6, 3);
  IntegratorOptions direct;
  direct.compose = false;
  const auto a = exact_propagator(gen, times);
  const auto b = exact_propagator(gen, times, direct);
  for (std::size_t i = 0; i < times.size(); ++i) {
    CHECK((a[i].mat - b[i].mat).norm() < 1e-8);
  }
}

TEST_CASE("halving the tolerance changes the propagator very little") {
  const auto gen = two_level_model(1.0, 0.1, 1.0 / 9, 1.0 / 80, 1.0);
  for (bool compose : {true, false}) {
    IntegratorOptions full, half;
    full.compose = half.compose = compose;
    half.tol = full.tol / 2;
    const auto a = exact_propagator(gen, {10 * gen.period(), 20 * gen.period()}, full);
    const auto b = exact_propagator(gen, {10 * gen.period(), 20 * gen.period()}, half);
    CHECK((a[0].mat - b[0].mat).norm() < 10 * full.tol);
    CHECK((a[1].mat - b[1].mat).norm() < 1e-8);
  }
}

TEST_CASE("stroboscopic propagators are powers of one period") {
  const auto gen = two_level_model(0.5, 0.2, 0.3, 0.05, 3.0);
  IntegratorOptions direct;
  direct.compose = false;
  const auto v = exact_propagator(gen, period_grid(gen.period(), 5, 1), direct);
  Matrix p = Matrix::Identity(4, 4);
  for (std::size_t k = 0; k < v.size(); ++k) {
    CHECK((v[k].mat - p).norm() < 1e-9 * std::max<double>(1.0, static_cast<double>(k)));
    p = v[1].mat * p;
  }
}

TEST_CASE("unitary dynamics has a rank-one Choi matrix") {
  const auto gen = two_level_model(0.7, 0.3, 0.2, 0.0, 2.0);
  const auto v = exact_propagator(gen, {0.9 * gen.period()});
  const RealVector ev = hermitian_eig(hermitian_part(choi_matrix(v[0]))).values;
  CHECK(ev(3) == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(std::abs(ev(0)) < 1e-9);
  CHECK(std::abs(ev(1)) < 1e-9);
  CHECK(std::abs(ev(2)) < 1e-9);
}

TEST_CASE("Choi matrix of the identity map") {
  const Matrix c = choi_matrix(SuperOp::identity(2));
  // Unnormalized maximally entangled projector.
  Matrix expected = Matrix::Zero(4, 4);
  expected(0, 0) = expected(0, 3) = expected(3, 0) = expected(3, 3) = 1.0;
  CHECK((c - expected).norm() < 1e-15);
  CHECK(choi_min_eig(SuperOp::identity(3)) == doctest::Approx(0.0));
}

TEST_CASE("exact propagators are trace preserving, Hermiticity preserving and CP") {
  const auto gen = oscillator_model(1.0, 0.3, 0.1, 2.0, 6);
  const auto v = exact_propagator(gen, period_grid(gen.period(), 3, 2));
  std::mt19937 rng(51);
  const Vector tr = vec(Matrix::Identity(6, 6));
  for (const auto& s : v) {
    CHECK((tr.adjoint() * s.mat - tr.adjoint()).norm() < 1e-9);
    CHECK(choi_min_eig(s) > -1e-9);
    const Matrix rho = oracle::random_density(rng, 6);
    CHECK(hermiticity_defect(s.apply(rho)) < 1e-9);
  }
}

TEST_CASE("generator propagators form a semigroup") {
  const auto model = DrivenModel::two_level({1.0, 0.2, 0.1, 0.05, 4.0});
  const auto g = corrected_generator(model, 2, 4.0);
  const auto times = period_grid(2 * M_PI / 4.0, 5, 1);
  const auto props = generator_propagators(g.corrected, times);
  for (std::size_t i = 0; i < times.size(); ++i) {
    CHECK((props[i].mat - generator_propagator(g.corrected, times[i]).mat).norm() < 1e-11);
  }
  const Matrix ab = props[2].mat * props[3].mat;
  CHECK((ab - props[5].mat).norm() < 1e-11);
}

TEST_CASE("deviation is floored and respects a subspace") {
  const SuperOp id = SuperOp::identity(3);
  CHECK(deviation(id, id) == kDeviationFloor);
  SuperOp other = id;
  other.mat(8, 8) += 0.1;  // only touches |2><2|
  CHECK(deviation(id, other) == doctest::Approx(-1.0));
  CHECK(deviation(id, other, SubspaceProjector::lowest(3, 2)) == kDeviationFloor);
}

TEST_CASE("subspace projector validation") {
  const auto p = SubspaceProjector::lowest(4, 2);
  CHECK(p.p.trace().real() == doctest::Approx(2.0));
  Matrix not_proj = Matrix::Identity(2, 2);
  not_proj(0, 1) = 0.5;
  CHECK_THROWS_AS(SubspaceProjector{not_proj}, std::invalid_argument);
  CHECK_THROWS(SubspaceProjector::lowest(3, 4));
}

TEST_CASE("population trace starts at the ground state") {
  const auto model = DrivenModel::two_level({1.0, 0.1, 1.0 / 9, 1.0 / 80, 1.0});
  const Matrix g = ground_projector(model);
  CHECK(g(1, 1).real() == 1.0);
  const auto pops = population_trace({SuperOp::identity(2)}, g, g);
  CHECK(pops[0] == doctest::Approx(1.0));
}

TEST_CASE("benchmark output layout and first-order corrected populations") {
  const auto model = DrivenModel::two_level({2.0, 0.1, 1.0 / 9, 1.0 / 80, 1.0});
  BenchmarkSpec spec;
  spec.orders = {1};
  spec.n_periods = 10;
  const BenchmarkResult r = run_benchmark(model, spec);
  REQUIRE(r.t_over_T.size() == 11);
  CHECK(r.t_over_T.back() == doctest::Approx(10.0));
  CHECK(r.population_exact[0] == doctest::Approx(1.0));
  CHECK(r.d.at(1)[0] == kDeviationFloor);
  for (double p : r.population_corrected.at(1)) {
    CHECK(p >= -1e-12);
    CHECK(p <= 1.0 + 1e-12);
  }
  for (double p : r.population_exact) {
    CHECK(p >= -1e-9);
    CHECK(p <= 1.0 + 1e-9);
  }
}

TEST_CASE("integrator failure is reported") {
  const auto gen = two_level_model(1.0, 0.3, 0.2, 0.1, 1.0);
  IntegratorOptions opts;
  opts.max_steps = 3;
  opts.compose = false;
  CHECK_THROWS_AS(exact_propagator(gen, {50.0}, opts), IntegratorFailure);
  CHECK_THROWS(exact_propagator(gen, {1.0, 0.5}));
}
