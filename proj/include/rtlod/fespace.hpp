#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "rtlod/coeff.hpp"
#include "rtlod/mesh.hpp"
#include "rtlod/types.hpp"

namespace rtlod {

using MeshPtr = std::shared_ptr<const Mesh>;

/// Lowest-order Raviart-Thomas space with zero normal trace on the boundary.
///
/// One dof per interior edge: the normal flux through the edge in the global
/// edge orientation. The global basis function of edge E restricted to a
/// triangle T is sign(T, E) * (x - P) / (2|T|), P the vertex opposite E.
class RTSpace {
 public:
  /// Throws UnsupportedFeature for degree >= 1.
  explicit RTSpace(MeshPtr mesh, int degree = 0);

  const Mesh& mesh() const { return *mesh_; }
  const MeshPtr& mesh_ptr() const { return mesh_; }
  int degree() const { return degree_; }
  int num_dofs() const { return static_cast<int>(edge_of_dof_.size()); }

  /// -1 for boundary edges.
  int dof_of_edge(int e) const { return dof_of_edge_[e]; }
  int edge_of_dof(int d) const { return edge_of_dof_[d]; }
  /// Dof of local edge i of triangle t (-1 on the boundary).
  int dof(int t, int i) const { return dof_of_edge_[mesh_->triangle_edges(t)[i]]; }
  int sign(int t, int i) const { return mesh_->triangle_edge_signs(t)[i]; }

 private:
  MeshPtr mesh_;
  int degree_;
  std::vector<int> dof_of_edge_;
  std::vector<int> edge_of_dof_;
};

/// Piecewise constants, one dof per triangle.
class PressureSpace {
 public:
  explicit PressureSpace(MeshPtr mesh, int degree = 0);

  const Mesh& mesh() const { return *mesh_; }
  const MeshPtr& mesh_ptr() const { return mesh_; }
  int degree() const { return degree_; }
  int num_dofs() const { return mesh_->num_triangles(); }
  const std::vector<double>& measures() const { return mesh_->areas(); }

 private:
  MeshPtr mesh_;
  int degree_;
};

namespace rt0 {

/// Outward unit-flux basis function of local edge i on triangle t.
Point local_basis(const Mesh& mesh, int t, int i, Point x);

/// Unweighted L2 Gram matrix of the three outward local basis functions.
Eigen::Matrix3d local_mass(const Mesh& mesh, int t);

/// Integral over triangle `sub` of the products of the outward basis
/// functions of triangles t1 and t2 (sub must lie in both supports).
Eigen::Matrix3d cross_mass(const Mesh& mesh1, int t1, const Mesh& mesh2, int t2,
                           const Mesh& sub_mesh, int sub);

/// Value at x inside triangle t of the field with global dofs `dofs`.
Point evaluate_in(const RTSpace& space, std::span<const double> dofs, int t, Point x);

}  // namespace rt0

/// Entry (i, j) = integral of kappa^{-1} phi_i . phi_j.
SparseMatrix assemble_weighted_mass(const RTSpace& space, const CoefficientField& coeff);

/// Coarse-space weighted mass with a coefficient given on a nested fine mesh.
SparseMatrix assemble_weighted_mass(const RTSpace& coarse, const CoefficientField& fine_coeff,
                                    const Mesh& fine_mesh, const NestingMap& map);

/// Same as the weighted mass but only over the listed triangles.
SparseMatrix assemble_weighted_mass_on(const RTSpace& space, const CoefficientField& coeff,
                                       std::span<const int> cells);

/// Entry (cell, dof) = integral over the cell of div phi_dof (+-1 or 0).
SparseMatrix assemble_div_matrix(const RTSpace& velocity, const PressureSpace& pressure);

using ScalarField = std::function<double(Point)>;

/// Entry per cell = integral of f over the cell (degree-4 rule).
Vector assemble_load(const PressureSpace& pressure, const ScalarField& f);

/// Entry per cell = value * area for a cellwise-constant field.
Vector cellwise_load(const PressureSpace& pressure, std::span<const double> values);

/// Columns are the fine dof coefficients of the coarse basis functions.
SparseMatrix prolongation_matrix(const RTSpace& coarse, const RTSpace& fine,
                                 const NestingMap& map);

struct FieldSample {
  Point value;
  bool inside = false;
};

/// Pointwise values; points outside the mesh are flagged, not thrown.
std::vector<FieldSample> evaluate_field(const RTSpace& space, std::span<const double> dofs,
                                        std::span<const Point> points);

/// |u| at the centroid of every triangle.
std::vector<double> cell_magnitudes(const RTSpace& space, std::span<const double> dofs);

}  // namespace rtlod
