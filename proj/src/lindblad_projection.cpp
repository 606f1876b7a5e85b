#include "cpmagnus/lindblad_projection.hpp"

#include <cmath>
#include <sstream>

namespace cpmagnus {

namespace {

std::string insufficient_message(double remainder, double rel, std::optional<int> order) {
  std::ostringstream msg;
  msg << "operator basis insufficient: unrepresentable remainder has norm " << remainder
      << " (relative residual " << rel << ")";
  if (order) {
    msg << " at order " << *order;
  }
  return msg.str();
}

/// Orthonormal (Frobenius) real basis of Hermitian n x n matrices.
Matrix hermitian_basis_element(Eigen::Index n, Eigen::Index idx) {
  Matrix e = Matrix::Zero(n, n);
  if (idx < n) {
    e(idx, idx) = 1.0;
    return e;
  }
  idx -= n;
  const double r = 1.0 / std::sqrt(2.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (idx == 0) {
        e(i, j) = r;
        e(j, i) = r;
        return e;
      }
      if (idx == 1) {
        e(i, j) = Complex(0.0, r);
        e(j, i) = Complex(0.0, -r);
        return e;
      }
      idx -= 2;
    }
  }
  throw std::out_of_range("hermitian_basis_element: index out of range");
}

std::vector<Eigen::Index> input_columns(std::size_t d, std::optional<std::size_t> interior) {
  const std::size_t k = interior ? std::min(*interior, d) : d;
  std::vector<Eigen::Index> cols;
  cols.reserve(k * k);
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t i = 0; i < k; ++i) {
      cols.push_back(static_cast<Eigen::Index>(i + j * d));
    }
  }
  return cols;
}

Matrix select_columns(const Matrix& m, const std::vector<Eigen::Index>& cols) {
  Matrix out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) {
    out.col(static_cast<Eigen::Index>(c)) = m.col(cols[c]);
  }
  return out;
}

void check_generator(const SuperOp& g, const std::vector<Eigen::Index>& cols) {
  const double scale = std::max(1.0, g.mat.norm());
  const Eigen::RowVectorXcd tr = trace_row(g.dim) * g.mat;
  for (const auto c : cols) {
    if (std::abs(tr(c)) > 1e-10 * scale) {
      std::ostringstream msg;
      msg << "generator is not trace-annihilating (defect " << std::abs(tr(c)) << ")";
      throw InvalidGenerator(msg.str());
    }
  }
  const auto d = static_cast<Eigen::Index>(g.dim);
  double defect = 0.0;
  for (const auto c : cols) {
    const Eigen::Index k = c % d;
    const Eigen::Index l = c / d;
    const Matrix out = unvec(g.mat.col(c), g.dim);
    const Matrix partner = unvec(g.mat.col(l + k * d), g.dim);
    defect = std::max(defect, (partner - out.adjoint()).cwiseAbs().maxCoeff());
  }
  if (defect > 1e-10 * scale) {
    std::ostringstream msg;
    msg << "generator is not Hermiticity-preserving (defect " << defect << ")";
    throw InvalidGenerator(msg.str());
  }
}

}  // namespace

BasisInsufficient::BasisInsufficient(double remainder_norm, double relative_residual,
                                     std::optional<int> order)
    : std::runtime_error(insufficient_message(remainder_norm, relative_residual, order)),
      remainder_norm_(remainder_norm),
      relative_residual_(relative_residual),
      order_(order) {}

SuperOp assemble_lindblad(const Matrix& h, const Matrix& c, const std::vector<Matrix>& basis) {
  if (h.rows() != h.cols()) {
    throw DimensionMismatch("assemble_lindblad: Hamiltonian must be square");
  }
  if (c.rows() != static_cast<Eigen::Index>(basis.size()) || c.cols() != c.rows()) {
    throw DimensionMismatch("assemble_lindblad: coefficient matrix does not match basis size");
  }
  for (const auto& op : basis) {
    if (op.rows() != h.rows() || op.cols() != h.cols()) {
      throw DimensionMismatch("assemble_lindblad: basis operator shape mismatch");
    }
  }
  if (!is_hermitian(h)) {
    throw NotHermitian("assemble_lindblad: Hamiltonian is not Hermitian");
  }
  if (!is_hermitian(c)) {
    throw NotHermitian("assemble_lindblad: coefficient matrix is not Hermitian");
  }
  return lindblad_superop(hermitian_part(h), hermitian_part(c), basis);
}

LindbladProjection project_to_lindblad(const SuperOp& g, const std::vector<Matrix>& basis,
                                       const ProjectionOptions& options) {
  const std::size_t d = g.dim;
  const auto di = static_cast<Eigen::Index>(d);
  const auto m = static_cast<Eigen::Index>(basis.size());
  for (const auto& op : basis) {
    if (op.rows() != di || op.cols() != di) {
      throw DimensionMismatch("project_to_lindblad: basis operator shape mismatch");
    }
  }
  const auto cols = input_columns(d, options.interior);
  check_generator(g, cols);

  const Eigen::Index n_h = di * di;
  const Eigen::Index n_c = m * m;
  const Eigen::Index n_params = n_h + n_c;
  const auto n_in = static_cast<Eigen::Index>(cols.size());
  const Eigen::Index n_out = di * di;

  // Linear map from real parameters to the selected columns, one block per
  // parameter; only rows touched by some parameter enter the fit.
  const auto param_block = [&](Eigen::Index p) -> Matrix {
    if (p < n_h) {
      return select_columns(commutator_super(hermitian_basis_element(di, p)).mat, cols);
    }
    return select_columns(dissipator_superop(hermitian_basis_element(m, p - n_h), basis).mat,
                          cols);
  };
  std::vector<Eigen::Index> row_of(static_cast<std::size_t>(n_out * n_in), -1);
  Eigen::Index used = 0;
  for (Eigen::Index p = 0; p < n_params; ++p) {
    const Matrix b = param_block(p);
    for (Eigen::Index c = 0; c < n_in; ++c) {
      for (Eigen::Index r = 0; r < n_out; ++r) {
        if (b(r, c) != Complex(0.0, 0.0)) {
          auto& slot = row_of[static_cast<std::size_t>(r + c * n_out)];
          if (slot < 0) {
            slot = used++;
          }
        }
      }
    }
  }

  // Blocks are rebuilt rather than cached; they are cheap next to the fit.
  Eigen::MatrixXd design = Eigen::MatrixXd::Zero(2 * used, n_params);
  Eigen::VectorXd target = Eigen::VectorXd::Zero(2 * used);
  const Matrix g_sel = select_columns(g.mat, cols);
  for (Eigen::Index p = 0; p <= n_params; ++p) {
    const Matrix b = p < n_params ? param_block(p) : g_sel;
    for (Eigen::Index c = 0; c < n_in; ++c) {
      for (Eigen::Index r = 0; r < n_out; ++r) {
        const Eigen::Index slot = row_of[static_cast<std::size_t>(r + c * n_out)];
        if (slot < 0) {
          continue;
        }
        if (p < n_params) {
          design(2 * slot, p) = b(r, c).real();
          design(2 * slot + 1, p) = b(r, c).imag();
        } else {
          target(2 * slot) = b(r, c).real();
          target(2 * slot + 1) = b(r, c).imag();
        }
      }
    }
  }

  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(design);
  cod.setThreshold(1e-11);
  const Eigen::VectorXd theta = n_params > 0 ? Eigen::VectorXd(cod.solve(target))
                                             : Eigen::VectorXd();

  LindbladProjection out;
  out.h = Matrix::Zero(di, di);
  for (Eigen::Index p = 0; p < n_h; ++p) {
    if (theta(p) != 0.0) {
      out.h += theta(p) * hermitian_basis_element(di, p);
    }
  }
  out.h -= (out.h.trace() / static_cast<double>(d)) * Matrix::Identity(di, di);
  out.c = Matrix::Zero(m, m);
  for (Eigen::Index p = 0; p < n_c; ++p) {
    if (theta(n_h + p) != 0.0) {
      out.c += theta(n_h + p) * hermitian_basis_element(m, p);
    }
  }

  const Matrix assembled = select_columns(lindblad_superop(out.h, out.c, basis).mat, cols);
  const double remainder = (assembled - g_sel).norm();
  out.residual = remainder / std::max(1.0, g_sel.norm());
  if (out.residual > options.threshold) {
    throw BasisInsufficient(remainder, out.residual);
  }
  return out;
}

std::size_t LindbladDecomposition::dim() const {
  return h_series.coeffs().empty() ? 0 : static_cast<std::size_t>(h_series.coeff(0).rows());
}

SuperOp LindbladDecomposition::generator_at(double omega) const {
  return assemble_lindblad(hermitian_part(h_at(omega)), hermitian_part(c_at(omega)), basis_ops);
}

LindbladDecomposition project_series(const OmegaSeries& series, const std::vector<Matrix>& basis,
                                     const ProjectionOptions& options) {
  LindbladDecomposition out;
  out.basis_ops = basis;
  std::vector<Matrix> hs;
  std::vector<Matrix> cs;
  for (int j = 0; j <= series.order(); ++j) {
    const Matrix& coeff = series.coeff(j);
    const auto d = static_cast<std::size_t>(std::llround(std::sqrt(double(coeff.rows()))));
    try {
      const auto proj = project_to_lindblad(SuperOp(d, coeff), basis, options);
      hs.push_back(proj.h);
      cs.push_back(proj.c);
      out.residuals.push_back(proj.residual);
      out.residual = std::max(out.residual, proj.residual);
    } catch (const BasisInsufficient& e) {
      throw BasisInsufficient(e.remainder_norm(), e.relative_residual(), j);
    }
  }
  out.h_series = OmegaSeries(std::move(hs));
  out.c_series = OmegaSeries(std::move(cs));
  return out;
}

LindbladDecomposition restrict_decomposition(const LindbladDecomposition& dec,
                                             std::size_t levels,
                                             std::vector<Matrix> truncated_basis) {
  const auto n = static_cast<Eigen::Index>(levels);
  if (truncated_basis.size() != dec.basis_ops.size()) {
    throw DimensionMismatch("restrict_decomposition: basis size changed");
  }
  std::vector<Matrix> hs;
  for (const auto& h : dec.h_series.coeffs()) {
    if (h.rows() < n) {
      throw DimensionMismatch("restrict_decomposition: cannot enlarge");
    }
    Matrix block = h.topLeftCorner(n, n);
    block -= (block.trace() / static_cast<double>(levels)) * Matrix::Identity(n, n);
    hs.push_back(std::move(block));
  }
  LindbladDecomposition out = dec;
  out.h_series = OmegaSeries(std::move(hs));
  out.basis_ops = std::move(truncated_basis);
  return out;
}

LindbladDecomposition decompose(const DrivenModel& model, int order) {
  const std::size_t levels = model.levels();
  const std::size_t padding = model.projection_padding(order);
  const std::size_t big = levels + padding;
  const OmegaSeries series = effective_series(model.generator(big), order);
  ProjectionOptions options;
  if (padding > 0) {
    options.interior = levels;
  }
  LindbladDecomposition dec = project_series(series, model.projection_basis(order, big), options);
  if (padding == 0) {
    return dec;
  }
  return restrict_decomposition(dec, levels, model.projection_basis(order, levels));
}

}  // namespace cpmagnus
