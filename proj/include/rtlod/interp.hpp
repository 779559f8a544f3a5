#pragma once

#include <functional>
#include <vector>

#include "rtlod/fespace.hpp"
#include "rtlod/mesh.hpp"
#include "rtlod/types.hpp"

namespace rtlod {

/// Coarse x fine averaging matrix: entry (T, t) = |t| / |T| for t inside T.
SparseMatrix l2_projection(const PressureSpace& fine, const PressureSpace& coarse,
                           const NestingMap& map);

/// Outward normal-flux moments of w on the three edges of triangle t
/// (two-point Gauss rule per edge, exact for quadratics).
Eigen::Vector3d canonical_interpolant_nc(const Mesh& mesh, int t,
                                         const std::function<Point(Point)>& w);

/// Linear map from a list of fine dofs to local coefficients.
struct LocalOperator {
  std::vector<int> fine_dofs;  // sorted
  DenseMatrix matrix;          // rows: local outputs, cols: fine_dofs
};

/// Result of sigma_step for one vertex: values of the global coarse dofs of
/// the interior coarse edges incident to z.
struct SigmaResult {
  std::vector<int> coarse_dofs;  // sorted
  Vector values;
};

/// Stable quasi-interpolation from a fine RT0 space to a nested coarse one.
///
/// tau: elementwise L2-best RT0(T) approximation with the cellwise mean
/// divergence as constraint. sigma: per-vertex smoothing on the vertex patch.
/// Pi = sum over vertices of sigma.
class QuasiInterpolation {
 public:
  /// The spaces and map must outlive this object.
  QuasiInterpolation(const RTSpace& coarse, const RTSpace& fine, const NestingMap& map);

  /// Rows are the outward local coefficients on T.
  LocalOperator tau_operator(int T) const;
  Eigen::Vector3d tau_step(const Vector& v, int T) const;

  /// Rows follow sigma_dofs(z).
  LocalOperator sigma_operator(int z) const;
  std::vector<int> sigma_dofs(int z) const;
  /// `tau` holds the tau_step result of every coarse triangle (only those of
  /// the vertex patch are read).
  SigmaResult sigma_step(int z, const std::vector<Eigen::Vector3d>& tau, const Vector& v) const;

  /// Fine dofs on edges inside or on the boundary of coarse triangle T.
  const std::vector<int>& fine_dofs_of(int T) const { return cell_dofs_[T]; }

  const RTSpace& coarse() const { return *coarse_; }
  const RTSpace& fine() const { return *fine_; }

 private:
  // Rows 0..2: outward tau coefficients; row 3: integral of div v over T.
  DenseMatrix tau_matrix(int T) const;
  // Integral over T of lambda_k div v, one row per local vertex k.
  DenseMatrix hat_div_matrix(int T) const;
  // Solves the patch problem for the given data; columns are independent.
  DenseMatrix sigma_solve(int z, const std::vector<DenseMatrix>& tau,
                          const std::vector<DenseMatrix>& hat_div, int ncols) const;

  const RTSpace* coarse_;
  const RTSpace* fine_;
  const NestingMap* map_;
  std::vector<std::vector<int>> cell_dofs_;
  // Per coarse triangle, per child: local column of each fine local edge
  // (-1 for boundary edges).
  std::vector<std::vector<std::array<int, 3>>> child_cols_;
};

struct InterpolationMatrix {
  SparseMatrix pi;  // coarse dofs x fine dofs
  /// Fine dofs whose column reaches a coarse dof outside N^1 of the coarse
  /// cells adjacent to the dof.
  int locality_violations = 0;
  /// Largest number of coarse layers actually reached by a column.
  int window_layers = 0;
};

InterpolationMatrix assemble_pi_matrix(const RTSpace& fine, const RTSpace& coarse,
                                       const NestingMap& map, int threads = 1);

}  // namespace rtlod
