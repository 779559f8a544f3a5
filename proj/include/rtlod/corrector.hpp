#pragma once

#include <memory>
#include <vector>

#include <Eigen/LU>

#include "rtlod/coeff.hpp"
#include "rtlod/fespace.hpp"
#include "rtlod/interp.hpp"
#include "rtlod/linsolve.hpp"
#include "rtlod/mesh.hpp"

namespace rtlod {

/// Everything the two-grid method needs, assembled once.
struct Discretization {
  MeshPtr coarse_mesh;
  MeshPtr fine_mesh;
  NestingMap map;
  RTSpace coarse;
  RTSpace fine;
  PressureSpace coarse_pressure;
  PressureSpace fine_pressure;
  CoefficientField coeff;  // per fine cell
  SparseMatrix prolongation;  // E: fine dofs x coarse dofs
  SparseMatrix pi;            // coarse dofs x fine dofs
  SparseMatrix pi_t;          // transpose of pi
  SparseMatrix fine_mass;     // A_h
  SparseMatrix fine_div;      // B_h: fine cells x fine dofs
  SparseMatrix coarse_div;    // B_H: coarse cells x coarse dofs
  SparseMatrix projection;    // P_H: coarse cells x fine cells
  int pi_locality_violations = 0;

  /// Throws InvalidArgument if the meshes are not nested or the coefficient
  /// does not match the fine mesh.
  static std::shared_ptr<const Discretization> build(MeshPtr coarse, MeshPtr fine,
                                                     CoefficientField coeff, int threads = 1);
  /// Uses a known nesting map instead of locating fine cells.
  static std::shared_ptr<const Discretization> build(MeshPtr coarse, MeshPtr fine,
                                                     NestingMap map, CoefficientField coeff,
                                                     int threads = 1);
};

using DiscretizationPtr = std::shared_ptr<const Discretization>;

/// Layer count that makes every patch the whole coarse mesh.
inline constexpr int kIdealLayers = -1;

/// Bordered fine-scale system on a coarse patch.
///
/// Unknowns are the fine fluxes on edges interior to the patch. Constraints:
/// the fine divergence minus its coarse-cell mean (one row per child beyond
/// the first in each coarse cell) and the rows of Pi that touch the patch,
/// with linearly dependent rows removed. Solutions are in W_div0(patch) when
/// the divergence data is zero.
class PatchSystem {
 public:
  PatchSystem(const Discretization& disc, ElementSet patch);

  const ElementSet& patch() const { return patch_; }
  /// Active fine dofs, sorted.
  const std::vector<int>& dofs() const { return dofs_; }
  /// Local index of a fine dof, or -1 if it is not active.
  int local_index(int fine_dof) const;
  /// Fine cells of the patch.
  const std::vector<int>& cells() const { return cells_; }
  int num_divergence_rows() const { return num_div_rows_; }
  int num_pi_rows() const { return static_cast<int>(pi_rows_.size()); }
  int num_dropped_pi_rows() const { return dropped_rows_; }
  const std::vector<int>& pi_rows() const { return pi_rows_; }

  /// Full bordered matrix (velocity block first).
  const SparseMatrix& matrix() const { return matrix_; }

  /// Columns of `velocity_rhs` (active dofs x k) are independent right sides;
  /// returns the velocity parts.
  DenseMatrix solve(const DenseMatrix& velocity_rhs) const;
  /// Single solve with a prescribed fine divergence density on the patch
  /// (vector over all fine cells; its integral over the patch must vanish).
  Vector solve(const Vector& velocity_rhs, const Vector& div_density) const;

 private:
  const Discretization* disc_;
  ElementSet patch_;
  std::vector<int> dofs_;
  std::vector<int> cells_;
  std::vector<int> div_cells_;
  int num_div_rows_ = 0;
  std::vector<int> pi_rows_;
  int dropped_rows_ = 0;
  SparseMatrix matrix_;
  std::unique_ptr<SparseLU> lu_;  // mixed block without the Pi rows
  DenseMatrix coupling_;
  std::unique_ptr<Eigen::PartialPivLU<DenseMatrix>> schur_;

  DenseMatrix solve_full(const DenseMatrix& rhs) const;
};

/// Per coarse element T: correctors of its three local basis functions,
/// stored on the active dofs of the patch of T.
struct CorrectorSet {
  int layers = 0;  // kIdealLayers for the ideal method
  std::vector<ElementSet> patches;
  std::vector<std::vector<int>> dofs;
  /// dofs[T].size() x 3; column i belongs to local edge i of T (zero for
  /// boundary edges).
  std::vector<DenseMatrix> blocks;

  bool ideal() const { return layers == kIdealLayers; }
  int num_elements() const { return static_cast<int>(blocks.size()); }
  /// Fine dof vector of C^m applied to a coarse dof vector.
  Vector apply(const Discretization& disc, const Vector& coarse) const;
};

ElementSet corrector_patch(const Discretization& disc, int T, int layers);

/// Right side a_T(E phi, .) on the active dofs, one column per local edge.
DenseMatrix element_corrector_rhs(const Discretization& disc, const PatchSystem& system, int T);

/// Corrector of the coarse basis function on local edge i of T (global fine
/// vector). Zero if the edge is on the boundary.
Vector solve_element_corrector(const Discretization& disc, int T, int layers, int local_edge);

/// One patch solve per coarse element; patches with equal cell sets share a
/// factorization. Result does not depend on `threads`.
CorrectorSet compute_all_correctors(const Discretization& disc, int layers, int threads = 1);

/// Source corrector on N^layers(T) for fine cell integrals `fine_load`:
/// div r = -(id - P_H)(f 1_T) and a(r, w) = 0 for w in W_div0(patch).
Vector solve_source_corrector(const Discretization& disc, int T, int layers,
                              const Vector& fine_load);

/// Sum over all coarse elements of the source correctors.
Vector compute_source_correction(const Discretization& disc, int layers, const Vector& fine_load,
                                 int threads = 1);

}  // namespace rtlod
