#pragma once

#include <Eigen/QR>
#include <Eigen/SVD>

#include "rtlod/corrector.hpp"

namespace rtlod::testing {

/// n x n coarse mesh, `levels` refinements, checkerboard (block > 0) or unit coefficient.
inline DiscretizationPtr make_disc(int n, int levels, double block, double lo = 0.01) {
  auto c = std::make_shared<const Mesh>(build_structured_mesh(n, n, {}));
  auto [f, map] = refine_uniform(*c, levels);
  auto fp = std::make_shared<const Mesh>(std::move(f));
  CoefficientField k = block > 0 ? checkerboard(*fp, block, 1.0, lo, {})
                                 : CoefficientField::constant(*fp, 1.0);
  return Discretization::build(c, fp, std::move(map), std::move(k));
}

/// Orthonormal basis of {w : Pi w = 0, B_h w = 0} from a dense SVD.
inline DenseMatrix w_div0_basis(const Discretization& d) {
  const int n = d.fine.num_dofs();
  DenseMatrix c(d.pi.rows() + d.fine_div.rows(), n);
  c.topRows(d.pi.rows()) = DenseMatrix(d.pi);
  c.bottomRows(d.fine_div.rows()) = DenseMatrix(d.fine_div);
  Eigen::JacobiSVD<DenseMatrix> svd(c, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  int rank = 0;
  while (rank < s.size() && s[rank] > 1e-10 * s[0]) ++rank;
  return svd.matrixV().rightCols(n - rank);
}

/// Ideal corrector of a fine field v with respect to element T:
/// a(q, w) = a_T(v, w) for all w in the basis N.
inline Vector ideal_corrector_oracle(const Discretization& d, const DenseMatrix& basis, int T,
                                     const Vector& v) {
  std::vector<int> cells = d.map.fine_cells_of_coarse[T];
  const SparseMatrix at = assemble_weighted_mass_on(d.fine, d.coeff, cells);
  const DenseMatrix a = DenseMatrix(d.fine_mass);
  const DenseMatrix k = basis.transpose() * a * basis;
  const Vector rhs = basis.transpose() * (at * v);
  return basis * k.ldlt().solve(rhs);
}

}  // namespace rtlod::testing
