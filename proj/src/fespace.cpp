#include "rtlod/fespace.hpp"

#include <cmath>
#include <string>

#include "rtlod/errors.hpp"
#include "rtlod/quadrature.hpp"

namespace rtlod {

RTSpace::RTSpace(MeshPtr mesh, int degree) : mesh_(std::move(mesh)), degree_(degree) {
  if (!mesh_) throw InvalidArgument("RT space needs a mesh");
  if (degree_ < 0) throw InvalidArgument("negative polynomial degree");
  if (degree_ >= 1) {
    throw UnsupportedFeature("Raviart-Thomas degree " + std::to_string(degree_) +
                             " is not implemented (only degree 0)");
  }
  dof_of_edge_.assign(mesh_->num_edges(), -1);
  for (int e = 0; e < mesh_->num_edges(); ++e) {
    if (!mesh_->is_boundary_edge(e)) {
      dof_of_edge_[e] = static_cast<int>(edge_of_dof_.size());
      edge_of_dof_.push_back(e);
    }
  }
}

PressureSpace::PressureSpace(MeshPtr mesh, int degree) : mesh_(std::move(mesh)), degree_(degree) {
  if (!mesh_) throw InvalidArgument("pressure space needs a mesh");
  if (degree_ < 0) throw InvalidArgument("negative polynomial degree");
  if (degree_ >= 1) {
    throw UnsupportedFeature("pressure degree " + std::to_string(degree_) +
                             " is not implemented (only degree 0)");
  }
}

namespace rt0 {

Point local_basis(const Mesh& mesh, int t, int i, Point x) {
  const Point p = mesh.vertex(mesh.triangle(t)[i]);
  return (1.0 / (2.0 * mesh.area(t))) * (x - p);
}

Eigen::Matrix3d cross_mass(const Mesh& mesh1, int t1, const Mesh& mesh2, int t2,
                           const Mesh& sub_mesh, int sub) {
  const auto& tri = sub_mesh.triangle(sub);
  const Point a = sub_mesh.vertex(tri[0]);
  const Point b = sub_mesh.vertex(tri[1]);
  const Point c = sub_mesh.vertex(tri[2]);
  Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
  for (const auto& q : quad::kDegree2) {
    const Point x = quad::map_point(q.lambda, a, b, c);
    const double w = q.weight * sub_mesh.area(sub);
    std::array<Point, 3> f1, f2;
    for (int i = 0; i < 3; ++i) {
      f1[i] = local_basis(mesh1, t1, i, x);
      f2[i] = local_basis(mesh2, t2, i, x);
    }
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) m(i, j) += w * dot(f1[i], f2[j]);
    }
  }
  return m;
}

Eigen::Matrix3d local_mass(const Mesh& mesh, int t) {
  return cross_mass(mesh, t, mesh, t, mesh, t);
}

Point evaluate_in(const RTSpace& space, std::span<const double> dofs, int t, Point x) {
  Point u{0.0, 0.0};
  for (int i = 0; i < 3; ++i) {
    const int d = space.dof(t, i);
    if (d < 0) continue;
    u = u + (space.sign(t, i) * dofs[d]) * local_basis(space.mesh(), t, i, x);
  }
  return u;
}

}  // namespace rt0

namespace {

void add_local(std::vector<Triplet>& triplets, const RTSpace& space, int t,
               const Eigen::Matrix3d& local) {
  for (int i = 0; i < 3; ++i) {
    const int di = space.dof(t, i);
    if (di < 0) continue;
    for (int j = 0; j < 3; ++j) {
      const int dj = space.dof(t, j);
      if (dj < 0) continue;
      triplets.emplace_back(di, dj, space.sign(t, i) * space.sign(t, j) * local(i, j));
    }
  }
}

SparseMatrix from_triplets(int rows, int cols, const std::vector<Triplet>& triplets) {
  SparseMatrix m(rows, cols);
  m.setFromTriplets(triplets.begin(), triplets.end());
  m.prune(0.0);
  return m;
}

}  // namespace

SparseMatrix assemble_weighted_mass_on(const RTSpace& space, const CoefficientField& coeff,
                                       std::span<const int> cells) {
  const Mesh& mesh = space.mesh();
  if (coeff.size() != mesh.num_triangles()) {
    throw InvalidArgument("coefficient field does not match the mesh of the space");
  }
  std::vector<Triplet> triplets;
  triplets.reserve(cells.size() * 9);
  for (int t : cells) add_local(triplets, space, t, rt0::local_mass(mesh, t) / coeff[t]);
  return from_triplets(space.num_dofs(), space.num_dofs(), triplets);
}

SparseMatrix assemble_weighted_mass(const RTSpace& space, const CoefficientField& coeff) {
  std::vector<int> all(space.mesh().num_triangles());
  for (int t = 0; t < static_cast<int>(all.size()); ++t) all[t] = t;
  return assemble_weighted_mass_on(space, coeff, all);
}

SparseMatrix assemble_weighted_mass(const RTSpace& coarse, const CoefficientField& fine_coeff,
                                    const Mesh& fine_mesh, const NestingMap& map) {
  const Mesh& mesh = coarse.mesh();
  if (map.num_coarse() != mesh.num_triangles() || map.num_fine() != fine_mesh.num_triangles()) {
    throw InvalidArgument("nesting map does not match the meshes");
  }
  if (fine_coeff.size() != fine_mesh.num_triangles()) {
    throw InvalidArgument("coefficient field does not match the fine mesh");
  }
  std::vector<Triplet> triplets;
  triplets.reserve(static_cast<std::size_t>(mesh.num_triangles()) * 9);
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    Eigen::Matrix3d local = Eigen::Matrix3d::Zero();
    for (int f : map.fine_cells_of_coarse[t]) {
      local += rt0::cross_mass(mesh, t, mesh, t, fine_mesh, f) / fine_coeff[f];
    }
    add_local(triplets, coarse, t, local);
  }
  return from_triplets(coarse.num_dofs(), coarse.num_dofs(), triplets);
}

SparseMatrix assemble_div_matrix(const RTSpace& velocity, const PressureSpace& pressure) {
  if (velocity.mesh_ptr() != pressure.mesh_ptr() &&
      velocity.mesh().num_triangles() != pressure.mesh().num_triangles()) {
    throw InvalidArgument("velocity and pressure spaces live on different meshes");
  }
  const Mesh& mesh = velocity.mesh();
  std::vector<Triplet> triplets;
  triplets.reserve(static_cast<std::size_t>(mesh.num_triangles()) * 3);
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    for (int i = 0; i < 3; ++i) {
      const int d = velocity.dof(t, i);
      if (d >= 0) triplets.emplace_back(t, d, static_cast<double>(velocity.sign(t, i)));
    }
  }
  return from_triplets(pressure.num_dofs(), velocity.num_dofs(), triplets);
}

Vector assemble_load(const PressureSpace& pressure, const ScalarField& f) {
  const Mesh& mesh = pressure.mesh();
  Vector load(mesh.num_triangles());
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangle(t);
    const Point a = mesh.vertex(tri[0]), b = mesh.vertex(tri[1]), c = mesh.vertex(tri[2]);
    double sum = 0.0;
    for (const auto& q : quad::kDegree4) sum += q.weight * f(quad::map_point(q.lambda, a, b, c));
    load[t] = sum * mesh.area(t);
  }
  return load;
}

Vector cellwise_load(const PressureSpace& pressure, std::span<const double> values) {
  const Mesh& mesh = pressure.mesh();
  if (static_cast<int>(values.size()) != mesh.num_triangles()) {
    throw InvalidArgument("cell values do not match the pressure space");
  }
  Vector load(mesh.num_triangles());
  for (int t = 0; t < mesh.num_triangles(); ++t) load[t] = values[t] * mesh.area(t);
  return load;
}

SparseMatrix prolongation_matrix(const RTSpace& coarse, const RTSpace& fine,
                                 const NestingMap& map) {
  const Mesh& cm = coarse.mesh();
  const Mesh& fm = fine.mesh();
  if (map.num_coarse() != cm.num_triangles() || map.num_fine() != fm.num_triangles()) {
    throw InvalidArgument("nesting map does not match the meshes");
  }
  std::vector<Triplet> triplets;
  triplets.reserve(static_cast<std::size_t>(fine.num_dofs()) * 2);
  for (int d = 0; d < fine.num_dofs(); ++d) {
    const int e = fine.edge_of_dof(d);
    const int child = fm.edge_triangles(e)[0];
    const int parent = map.coarse_of_fine[child];
    const Point mid = fm.edge_midpoint(e);
    const auto lam = cm.barycentric(parent, mid);
    if (lam[0] < -1e-10 || lam[1] < -1e-10 || lam[2] < -1e-10) {
      throw InvalidArgument("meshes are not nested: fine edge outside its parent");
    }
    const Point n = fm.edge_normal(e);
    const double len = fm.edge_length(e);
    for (int i = 0; i < 3; ++i) {
      const int cd = coarse.dof(parent, i);
      if (cd < 0) continue;
      // The normal component of an RT0 field is linear along a segment, so
      // the midpoint value times the length is the exact flux.
      const double flux =
          coarse.sign(parent, i) * dot(rt0::local_basis(cm, parent, i, mid), n) * len;
      if (std::abs(flux) > 1e-14) triplets.emplace_back(d, cd, flux);
    }
  }
  return from_triplets(fine.num_dofs(), coarse.num_dofs(), triplets);
}

std::vector<FieldSample> evaluate_field(const RTSpace& space, std::span<const double> dofs,
                                        std::span<const Point> points) {
  if (static_cast<int>(dofs.size()) != space.num_dofs()) {
    throw InvalidArgument("dof vector does not match the space");
  }
  const PointLocator locator(space.mesh());
  std::vector<FieldSample> out(points.size());
  for (std::size_t k = 0; k < points.size(); ++k) {
    const int t = locator.locate(points[k], 1e-12);
    if (t < 0) continue;
    out[k] = {rt0::evaluate_in(space, dofs, t, points[k]), true};
  }
  return out;
}

std::vector<double> cell_magnitudes(const RTSpace& space, std::span<const double> dofs) {
  const Mesh& mesh = space.mesh();
  std::vector<double> mags(mesh.num_triangles());
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const Point u = rt0::evaluate_in(space, dofs, t, mesh.centroid(t));
    mags[t] = std::hypot(u.x, u.y);
  }
  return mags;
}

}  // namespace rtlod
