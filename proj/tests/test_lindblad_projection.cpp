#include <doctest.h>

#include <random>

#include "cpmagnus/lindblad_projection.hpp"
#include "oracles.hpp"

using namespace cpmagnus;

namespace {

std::vector<Matrix> paulis() { return {pauli::x(), pauli::y(), pauli::z()}; }

Matrix real3(std::initializer_list<double> v) {
  Matrix m(3, 3);
  auto it = v.begin();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      m(r, c) = *it++;
    }
  }
  return m;
}

}  // namespace

TEST_CASE("projection recovers h and c it was built from") {
  std::mt19937 rng(31);
  for (int trial = 0; trial < 5; ++trial) {
    Matrix h = oracle::random_hermitian(rng, 2);
    h -= (h.trace() / 2.0) * Matrix::Identity(2, 2);
    const Matrix c = oracle::random_hermitian(rng, 3);
    const auto proj = project_to_lindblad(lindblad_superop(h, c, paulis()), paulis());
    CHECK((proj.h - h).norm() < 1e-12);
    CHECK((proj.c - c).norm() < 1e-12);
    CHECK(proj.residual < 1e-13);
    CHECK(std::abs(proj.h.trace()) < 1e-14);
  }
}

TEST_CASE("projection over a general three-level basis") {
  std::mt19937 rng(32);
  Matrix h = oracle::random_hermitian(rng, 3);
  h -= (h.trace() / 3.0) * Matrix::Identity(3, 3);
  std::vector<Matrix> basis;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      if (i != j || i > 0) {
        Matrix e = Matrix::Zero(3, 3);
        e(i, j) = 1.0;
        basis.push_back(e);
      }
    }
  }
  const Matrix c = oracle::random_psd(rng, static_cast<Eigen::Index>(basis.size()));
  const auto proj = project_to_lindblad(lindblad_superop(h, c, basis), basis);
  CHECK((proj.h - h).norm() < 1e-10);
  CHECK((proj.c - c).norm() < 1e-10);
}

TEST_CASE("insufficient basis is reported") {
  const Matrix h = 0.5 * pauli::z();
  Matrix c = Matrix::Zero(3, 3);
  c(0, 0) = 0.3;  // sx dephasing
  const SuperOp g = lindblad_superop(h, c, paulis());
  const std::vector<Matrix> only_z{pauli::z()};
  try {
    project_to_lindblad(g, only_z);
    FAIL("expected BasisInsufficient");
  } catch (const BasisInsufficient& e) {
    CHECK(e.relative_residual() > 1e-3);
    CHECK(e.remainder_norm() > 0.0);
  }
}

TEST_CASE("non-generators are rejected") {
  CHECK_THROWS_AS(project_to_lindblad(SuperOp::identity(2), paulis()), InvalidGenerator);
  SuperOp bad = commutator_super(pauli::x());
  bad.mat(1, 2) += Complex(0.0, 0.5);  // breaks Hermiticity preservation only
  CHECK_THROWS_AS(project_to_lindblad(bad, paulis()), InvalidGenerator);
  CHECK_THROWS_AS(assemble_lindblad(pauli::x() * pauli::z(), Matrix::Zero(3, 3), paulis()),
                  NotHermitian);
  CHECK_THROWS_AS(assemble_lindblad(pauli::z(), Matrix::Zero(2, 2), paulis()), DimensionMismatch);
}

TEST_CASE("two-level coefficient series through second order") {
  const double w0 = 0.7, os = 0.3, oc = 0.2, g = 0.15;
  const auto dec = decompose(DrivenModel::two_level({w0, os, oc, g, 1.0}), 2);
  CHECK(dec.residual < 1e-10);
  const double alpha = -4 * g * w0 * oc;
  const double beta = 2 * g * (oc * oc + 3 * os * os);
  CHECK((dec.c_series.coeff(0) - real3({0, 0, 0, 0, 0, 0, 0, 0, g})).norm() < 1e-12);
  CHECK((dec.c_series.coeff(1) - 2 * g * os * real3({0, 0, 0, 0, 0, 1, 0, 1, 0})).norm() < 1e-12);
  CHECK((dec.c_series.coeff(2) - real3({0, 0, alpha, 0, beta, 0, alpha, 0, -beta})).norm() <
        1e-12);
  const double a = -w0 / 2 * (oc * oc + 3 * os * os);
  const double b = (4 * g * g - w0 * w0) * oc;
  CHECK((dec.h_series.coeff(0) - w0 / 2 * pauli::z()).norm() < 1e-12);
  CHECK((dec.h_series.coeff(1) - w0 * os * pauli::y()).norm() < 1e-12);
  // sz conjugation flips both drive amplitudes and sx, so the sx part must be
  // odd in the drive: b goes with sx, a with sz.
  CHECK((dec.h_series.coeff(2) - (b * pauli::x() + a * pauli::z())).norm() < 1e-12);
}

TEST_CASE("decomposition reassembles the effective generator") {
  const auto model = DrivenModel::two_level({0.5, 0.2, 0.1, 0.05, 4.0});
  const auto dec = decompose(model, 3);
  const OmegaSeries s = effective_series(model.generator(), 3);
  CHECK((dec.generator_at(4.0).mat - s.evaluate(4.0)).norm() < 1e-12);
}

TEST_CASE("gamma = 0 gives a vanishing coefficient series") {
  const auto dec = decompose(DrivenModel::two_level({0.5, 0.2, 0.1, 0.0, 1.0}), 3);
  for (int j = 0; j <= 3; ++j) {
    CHECK(dec.c_series.coeff(j).norm() < 1e-12);
  }
}

TEST_CASE("oscillator coefficient series over a, a^+, n") {
  const double w = 0.3, g = 0.2;
  const auto dec = decompose(DrivenModel::oscillator({1.0, w, g, 1.0, 8}), 2);
  Matrix c1 = Matrix::Zero(3, 3);
  c1(0, 2) = 1.0;
  c1(1, 2) = -1.0;
  c1(2, 0) = -1.0;
  c1(2, 1) = 1.0;
  c1 *= Complex(0.0, g * w);
  const Matrix c2 = 1.5 * g * w * w * real3({1, -1, 0, -1, 1, 0, 0, 0, 0});
  CHECK((dec.c_series.coeff(0) - real3({0, 0, 0, 0, 0, 0, 0, 0, g})).norm() < 1e-12);
  CHECK((dec.c_series.coeff(1) - c1).norm() < 1e-12);
  CHECK((dec.c_series.coeff(2) - c2).norm() < 1e-12);
  CHECK(dec.h_series.coeff(0).rows() == 8);
}
