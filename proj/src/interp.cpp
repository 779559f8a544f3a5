#include "rtlod/interp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rtlod/errors.hpp"
#include "rtlod/linsolve.hpp"
#include "rtlod/parallel.hpp"
#include "rtlod/quadrature.hpp"

namespace rtlod {

SparseMatrix l2_projection(const PressureSpace& fine, const PressureSpace& coarse,
                           const NestingMap& map) {
  const Mesh& cm = coarse.mesh();
  const Mesh& fm = fine.mesh();
  if (map.num_coarse() != cm.num_triangles() || map.num_fine() != fm.num_triangles()) {
    throw InvalidArgument("meshes are not nested: nesting map does not match");
  }
  std::vector<Triplet> triplets;
  triplets.reserve(fm.num_triangles());
  for (int T = 0; T < cm.num_triangles(); ++T) {
    for (int t : map.fine_cells_of_coarse[T]) {
      triplets.emplace_back(T, t, fm.area(t) / cm.area(T));
    }
  }
  SparseMatrix p(cm.num_triangles(), fm.num_triangles());
  p.setFromTriplets(triplets.begin(), triplets.end());
  return p;
}

Eigen::Vector3d canonical_interpolant_nc(const Mesh& mesh, int t,
                                         const std::function<Point(Point)>& w) {
  Eigen::Vector3d moments;
  const auto& tri = mesh.triangle(t);
  for (int i = 0; i < 3; ++i) {
    const Point a = mesh.vertex(tri[(i + 1) % 3]);
    const Point b = mesh.vertex(tri[(i + 2) % 3]);
    const Point d = b - a;
    // Counterclockwise triangle: the outward normal of edge a->b is d rotated
    // clockwise.
    const double len = std::hypot(d.x, d.y);
    const Point n{d.y / len, -d.x / len};
    double sum = 0.0;
    for (const auto& g : quad::kGauss2) sum += g[1] * dot(w(a + g[0] * d), n);
    moments[i] = sum * len;
  }
  return moments;
}

QuasiInterpolation::QuasiInterpolation(const RTSpace& coarse, const RTSpace& fine,
                                       const NestingMap& map)
    : coarse_(&coarse), fine_(&fine), map_(&map) {
  const Mesh& cm = coarse.mesh();
  const Mesh& fm = fine.mesh();
  if (map.num_coarse() != cm.num_triangles() || map.num_fine() != fm.num_triangles()) {
    throw InvalidArgument("meshes are not nested: nesting map does not match");
  }
  cell_dofs_.resize(cm.num_triangles());
  child_cols_.resize(cm.num_triangles());
  for (int T = 0; T < cm.num_triangles(); ++T) {
    auto& dofs = cell_dofs_[T];
    for (int t : map.fine_cells_of_coarse[T]) {
      for (int i = 0; i < 3; ++i) {
        const int d = fine.dof(t, i);
        if (d >= 0) dofs.push_back(d);
      }
    }
    std::sort(dofs.begin(), dofs.end());
    dofs.erase(std::unique(dofs.begin(), dofs.end()), dofs.end());
    auto& cols = child_cols_[T];
    for (int t : map.fine_cells_of_coarse[T]) {
      std::array<int, 3> c{-1, -1, -1};
      for (int i = 0; i < 3; ++i) {
        const int d = fine.dof(t, i);
        if (d >= 0) {
          c[i] = static_cast<int>(std::lower_bound(dofs.begin(), dofs.end(), d) - dofs.begin());
        }
      }
      cols.push_back(c);
    }
  }
}

DenseMatrix QuasiInterpolation::tau_matrix(int T) const {
  const Mesh& cm = coarse_->mesh();
  const Mesh& fm = fine_->mesh();
  const auto& children = map_->fine_cells_of_coarse[T];
  const int n = static_cast<int>(cell_dofs_[T].size());
  // G (3 x n): moments against the coarse basis; D (1 x n): total flux.
  DenseMatrix rhs = DenseMatrix::Zero(4, n);
  for (std::size_t c = 0; c < children.size(); ++c) {
    const int t = children[c];
    const Eigen::Matrix3d cross = rt0::cross_mass(cm, T, fm, t, fm, t);
    for (int j = 0; j < 3; ++j) {
      const int col = child_cols_[T][c][j];
      if (col < 0) continue;
      const double s = fine_->sign(t, j);
      for (int i = 0; i < 3; ++i) rhs(i, col) += s * cross(i, j);
      rhs(3, col) += s;
    }
  }
  Eigen::Matrix4d k = Eigen::Matrix4d::Zero();
  k.topLeftCorner<3, 3>() = rt0::local_mass(cm, T);
  k.block<3, 1>(0, 3).setOnes();
  k.block<1, 3>(3, 0).setOnes();
  DenseMatrix sol = dense_solve(k, rhs, "tau step on coarse cell " + std::to_string(T));
  sol.row(3) = rhs.row(3);
  return sol;
}

DenseMatrix QuasiInterpolation::hat_div_matrix(int T) const {
  const Mesh& cm = coarse_->mesh();
  const Mesh& fm = fine_->mesh();
  const auto& children = map_->fine_cells_of_coarse[T];
  DenseMatrix out = DenseMatrix::Zero(3, static_cast<int>(cell_dofs_[T].size()));
  for (std::size_t c = 0; c < children.size(); ++c) {
    const int t = children[c];
    // div v is constant on t and lambda_k is linear: the centroid rule is exact.
    const auto lam = cm.barycentric(T, fm.centroid(t));
    for (int j = 0; j < 3; ++j) {
      const int col = child_cols_[T][c][j];
      if (col < 0) continue;
      const double s = fine_->sign(t, j);
      for (int k = 0; k < 3; ++k) out(k, col) += s * lam[k];
    }
  }
  return out;
}

LocalOperator QuasiInterpolation::tau_operator(int T) const {
  if (T < 0 || T >= coarse_->mesh().num_triangles()) {
    throw InvalidArgument("coarse cell index out of range");
  }
  DenseMatrix m = tau_matrix(T);
  return {cell_dofs_[T], m.topRows(3)};
}

Eigen::Vector3d QuasiInterpolation::tau_step(const Vector& v, int T) const {
  if (v.size() != fine_->num_dofs()) throw InvalidArgument("fine vector has wrong size");
  const LocalOperator op = tau_operator(T);
  Vector local(op.fine_dofs.size());
  for (std::size_t i = 0; i < op.fine_dofs.size(); ++i) local[i] = v[op.fine_dofs[i]];
  return op.matrix * local;
}

namespace {

int local_index_of_vertex(const Mesh& mesh, int t, int z) {
  const auto& tri = mesh.triangle(t);
  for (int k = 0; k < 3; ++k) {
    if (tri[k] == z) return k;
  }
  throw InternalError("vertex is not a corner of the triangle");
}

}  // namespace

std::vector<int> QuasiInterpolation::sigma_dofs(int z) const {
  const Mesh& cm = coarse_->mesh();
  if (z < 0 || z >= cm.num_vertices()) throw InvalidArgument("vertex index out of range");
  std::vector<int> dofs;
  for (int T : cm.triangles_of_vertex(z)) {
    const int kz = local_index_of_vertex(cm, T, z);
    for (int i = 0; i < 3; ++i) {
      const int d = coarse_->dof(T, i);
      if (i != kz && d >= 0) dofs.push_back(d);
    }
  }
  std::sort(dofs.begin(), dofs.end());
  dofs.erase(std::unique(dofs.begin(), dofs.end()), dofs.end());
  return dofs;
}

DenseMatrix QuasiInterpolation::sigma_solve(int z, const std::vector<DenseMatrix>& tau,
                                            const std::vector<DenseMatrix>& hat_div,
                                            int ncols) const {
  const Mesh& cm = coarse_->mesh();
  const auto cells = cm.triangles_of_vertex(z);
  const std::vector<int> dofs = sigma_dofs(z);
  const int k = static_cast<int>(dofs.size());
  const int nt = static_cast<int>(cells.size());
  const int size = k + nt + 1;
  DenseMatrix sys = DenseMatrix::Zero(size, size);
  DenseMatrix rhs = DenseMatrix::Zero(size, ncols);
  auto row_of = [&](int d) {
    return static_cast<int>(std::lower_bound(dofs.begin(), dofs.end(), d) - dofs.begin());
  };
  for (int c = 0; c < nt; ++c) {
    const int T = cells[c];
    const int kz = local_index_of_vertex(cm, T, z);
    const Eigen::Matrix3d mass = rt0::local_mass(cm, T);
    std::array<int, 3> rows{-1, -1, -1};
    for (int i = 0; i < 3; ++i) {
      const int d = coarse_->dof(T, i);
      if (i != kz && d >= 0) rows[i] = row_of(d);
    }
    // Interpolant of psi_z tau on T: half of tau's flux on the two edges at
    // z, nothing on the opposite edge.
    DenseMatrix half = 0.5 * tau[c];
    half.row(kz).setZero();
    for (int i = 0; i < 3; ++i) {
      if (rows[i] < 0) continue;
      const double si = coarse_->sign(T, i);
      for (int j = 0; j < 3; ++j) {
        if (rows[j] >= 0) sys(rows[i], rows[j]) += si * coarse_->sign(T, j) * mass(i, j);
      }
      rhs.row(rows[i]) += si * (mass.col(i).transpose() * half);
      sys(k + c, rows[i]) += si;
      sys(rows[i], k + c) += si;
    }
    // Integral of grad(psi_z) . tau = grad(lambda_kz) . sum_i c_i (x_T - P_i) / 2.
    const Point g = cm.barycentric_gradient(T, kz);
    const Point xc = cm.centroid(T);
    const auto& tri = cm.triangle(T);
    DenseMatrix div_row = hat_div[c];
    for (int i = 0; i < 3; ++i) {
      const double w = 0.5 * dot(g, xc - cm.vertex(tri[i]));
      div_row += w * tau[c].row(i);
    }
    rhs.row(k + c) = div_row;
    sys(k + c, k + nt) = cm.area(T);
    sys(k + nt, k + c) = cm.area(T);
  }
  DenseMatrix sol = dense_solve(sys, rhs, "sigma step at coarse vertex " + std::to_string(z));
  // The multiplier of the zero-mean row vanishes for compatible data.
  double data_scale = 0.0;
  for (int c = 0; c < nt; ++c) data_scale = std::max(data_scale, rhs.row(k + c).cwiseAbs().maxCoeff());
  double area = 0.0;
  for (int c = 0; c < nt; ++c) area += cm.area(cells[c]);
  const double defect = sol.row(k + nt).cwiseAbs().maxCoeff() * area;
  if (defect > 1e-8 * std::max(data_scale, 1e-300) && defect > 1e-14) {
    throw InternalError("incompatible divergence data at coarse vertex " + std::to_string(z) +
                        ": residual " + std::to_string(defect));
  }
  return sol.topRows(k);
}

LocalOperator QuasiInterpolation::sigma_operator(int z) const {
  const Mesh& cm = coarse_->mesh();
  if (z < 0 || z >= cm.num_vertices()) throw InvalidArgument("vertex index out of range");
  const auto cells = cm.triangles_of_vertex(z);
  std::vector<int> fine_dofs;
  for (int T : cells) fine_dofs.insert(fine_dofs.end(), cell_dofs_[T].begin(), cell_dofs_[T].end());
  std::sort(fine_dofs.begin(), fine_dofs.end());
  fine_dofs.erase(std::unique(fine_dofs.begin(), fine_dofs.end()), fine_dofs.end());
  const int ncols = static_cast<int>(fine_dofs.size());
  std::vector<DenseMatrix> tau, hat_div;
  for (int T : cells) {
    const int kz = local_index_of_vertex(cm, T, z);
    const DenseMatrix tm = tau_matrix(T);
    const DenseMatrix hd = hat_div_matrix(T);
    DenseMatrix t3 = DenseMatrix::Zero(3, ncols);
    DenseMatrix h1 = DenseMatrix::Zero(1, ncols);
    const auto& local = cell_dofs_[T];
    for (std::size_t j = 0; j < local.size(); ++j) {
      const int col = static_cast<int>(
          std::lower_bound(fine_dofs.begin(), fine_dofs.end(), local[j]) - fine_dofs.begin());
      t3.col(col) = tm.block(0, j, 3, 1);
      h1(0, col) = hd(kz, j);
    }
    tau.push_back(std::move(t3));
    hat_div.push_back(std::move(h1));
  }
  return {std::move(fine_dofs), sigma_solve(z, tau, hat_div, ncols)};
}

SigmaResult QuasiInterpolation::sigma_step(int z, const std::vector<Eigen::Vector3d>& tau,
                                           const Vector& v) const {
  const Mesh& cm = coarse_->mesh();
  if (z < 0 || z >= cm.num_vertices()) throw InvalidArgument("vertex index out of range");
  if (static_cast<int>(tau.size()) != cm.num_triangles()) {
    throw InvalidArgument("tau must hold one entry per coarse cell");
  }
  if (v.size() != fine_->num_dofs()) throw InvalidArgument("fine vector has wrong size");
  std::vector<DenseMatrix> taus, hat_div;
  for (int T : cm.triangles_of_vertex(z)) {
    const int kz = local_index_of_vertex(cm, T, z);
    taus.emplace_back(tau[T]);
    const DenseMatrix hd = hat_div_matrix(T);
    const auto& local = cell_dofs_[T];
    Vector lv(local.size());
    for (std::size_t j = 0; j < local.size(); ++j) lv[j] = v[local[j]];
    DenseMatrix h(1, 1);
    h(0, 0) = hd.row(kz).dot(lv);
    hat_div.push_back(h);
  }
  DenseMatrix sol = sigma_solve(z, taus, hat_div, 1);
  return {sigma_dofs(z), sol.col(0)};
}

namespace {

// Smallest layer count k <= 2 such that all coarse dofs lie on edges of
// N^k(cells); 3 if none.
int layers_needed(const std::vector<std::vector<std::vector<int>>>& patches, const Mesh& cm,
                  const RTSpace& coarse, std::span<const int> cells, std::span<const int> dofs) {
  for (int k = 0; k < 3; ++k) {
    bool ok = true;
    for (int d : dofs) {
      const auto& adj = cm.edge_triangles(coarse.edge_of_dof(d));
      bool found = false;
      for (int c : cells) {
        const auto& p = patches[k][c];
        if (std::binary_search(p.begin(), p.end(), adj[0]) ||
            std::binary_search(p.begin(), p.end(), adj[1])) {
          found = true;
          break;
        }
      }
      if (!found) {
        ok = false;
        break;
      }
    }
    if (ok) return k;
  }
  return 3;
}

}  // namespace

InterpolationMatrix assemble_pi_matrix(const RTSpace& fine, const RTSpace& coarse,
                                       const NestingMap& map, int threads) {
  const QuasiInterpolation qi(coarse, fine, map);
  const Mesh& cm = coarse.mesh();
  const int nv = cm.num_vertices();
  std::vector<LocalOperator> ops(nv);
  std::vector<std::vector<int>> rows(nv);
  parallel_for(nv, threads, [&](int z) {
    ops[z] = qi.sigma_operator(z);
    rows[z] = qi.sigma_dofs(z);
  });
  std::vector<Triplet> triplets;
  for (int z = 0; z < nv; ++z) {
    const auto& op = ops[z];
    for (Eigen::Index r = 0; r < op.matrix.rows(); ++r) {
      for (Eigen::Index c = 0; c < op.matrix.cols(); ++c) {
        const double v = op.matrix(r, c);
        if (std::abs(v) > 1e-15) triplets.emplace_back(rows[z][r], op.fine_dofs[c], v);
      }
    }
  }
  InterpolationMatrix out;
  out.pi.resize(coarse.num_dofs(), fine.num_dofs());
  out.pi.setFromTriplets(triplets.begin(), triplets.end());
  out.pi.prune(1e-14, 1.0);

  // Locality record: each column against N^1 of the coarse cells next to it.
  std::vector<std::vector<std::vector<int>>> patches(3);
  for (int k = 0; k < 3; ++k) {
    patches[k].resize(cm.num_triangles());
    for (int T = 0; T < cm.num_triangles(); ++T) patches[k][T] = element_patch(cm, T, k).cells;
  }
  const Mesh& fm = fine.mesh();
  for (int d = 0; d < fine.num_dofs(); ++d) {
    const auto& adj = fm.edge_triangles(fine.edge_of_dof(d));
    std::vector<int> cells{map.coarse_of_fine[adj[0]]};
    if (adj[1] >= 0 && map.coarse_of_fine[adj[1]] != cells[0]) {
      cells.push_back(map.coarse_of_fine[adj[1]]);
    }
    std::vector<int> dofs;
    for (SparseMatrix::InnerIterator it(out.pi, d); it; ++it) dofs.push_back(static_cast<int>(it.index()));
    const int k = layers_needed(patches, cm, coarse, cells, dofs);
    out.window_layers = std::max(out.window_layers, k);
    if (k > 1) ++out.locality_violations;
  }
  return out;
}

}  // namespace rtlod
