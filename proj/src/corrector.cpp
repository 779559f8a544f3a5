#include "rtlod/corrector.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>

#include "rtlod/errors.hpp"
#include "rtlod/parallel.hpp"

namespace rtlod {

std::shared_ptr<const Discretization> Discretization::build(MeshPtr coarse, MeshPtr fine,
                                                            CoefficientField coeff, int threads) {
  if (!coarse || !fine) throw InvalidArgument("discretization needs two meshes");
  NestingMap map = build_nesting(*coarse, *fine);
  return build(std::move(coarse), std::move(fine), std::move(map), std::move(coeff), threads);
}

std::shared_ptr<const Discretization> Discretization::build(MeshPtr coarse, MeshPtr fine,
                                                            NestingMap map,
                                                            CoefficientField coeff, int threads) {
  if (!coarse || !fine) throw InvalidArgument("discretization needs two meshes");
  if (coeff.size() != fine->num_triangles()) {
    throw InvalidArgument("coefficient field does not match the fine mesh");
  }
  if (map.num_coarse() != coarse->num_triangles() || map.num_fine() != fine->num_triangles()) {
    throw InvalidArgument("meshes are not nested: nesting map does not match");
  }
  auto d = std::shared_ptr<Discretization>(new Discretization{
      coarse, fine, std::move(map), RTSpace(coarse), RTSpace(fine), PressureSpace(coarse),
      PressureSpace(fine), std::move(coeff), {}, {}, {}, {}, {}, {}, {}, 0});
  d->prolongation = prolongation_matrix(d->coarse, d->fine, d->map);
  InterpolationMatrix im = assemble_pi_matrix(d->fine, d->coarse, d->map, threads);
  d->pi = std::move(im.pi);
  d->pi_t = d->pi.transpose();
  d->pi_locality_violations = im.locality_violations;
  d->fine_mass = assemble_weighted_mass(d->fine, d->coeff);
  d->fine_div = assemble_div_matrix(d->fine, d->fine_pressure);
  d->coarse_div = assemble_div_matrix(d->coarse, d->coarse_pressure);
  d->projection = l2_projection(d->fine_pressure, d->coarse_pressure, d->map);
  return d;
}

namespace {

// Indices (into `rows`) of Pi rows that stay linearly independent on the
// discrete divergence-free fields of the patch. Those fields are curls of
// fine P1 stream functions vanishing on the patch boundary, so the rank
// decision runs on G = Pi * curl via pivoted Cholesky of G G^T.
std::vector<int> independent_pi_rows(const Discretization& d, const std::vector<int>& rows,
                                     const std::vector<int>& local,
                                     const std::vector<std::uint8_t>& in_patch) {
  const Mesh& fm = *d.fine_mesh;
  std::vector<int> stream(fm.num_vertices(), -1);
  int ns = 0;
  for (int v = 0; v < fm.num_vertices(); ++v) {
    if (fm.is_boundary_vertex(v)) continue;
    bool inside = true;
    for (int t : fm.triangles_of_vertex(v)) inside = inside && in_patch[t];
    if (inside) stream[v] = ns++;
  }
  if (rows.empty() || ns == 0) return {};
  // Flux of curl(phi_v) through edge (a, b) is phi_v(b) - phi_v(a).
  const int nr = static_cast<int>(rows.size());
  std::vector<Triplet> trip;
  double scale = 0.0;
  for (int j = 0; j < nr; ++j) {
    double norm2 = 0.0;
    for (SparseMatrix::InnerIterator it(d.pi_t, rows[j]); it; ++it) {
      if (local[it.index()] < 0) continue;
      norm2 += it.value() * it.value();
      const Edge& e = fm.edge(d.fine.edge_of_dof(static_cast<int>(it.index())));
      if (stream[e[1]] >= 0) trip.emplace_back(j, stream[e[1]], it.value());
      if (stream[e[0]] >= 0) trip.emplace_back(j, stream[e[0]], -it.value());
    }
    scale = std::max(scale, norm2);
  }
  SparseMatrix g(nr, ns);
  g.setFromTriplets(trip.begin(), trip.end());
  DenseMatrix gram = DenseMatrix(g * SparseMatrix(g.transpose()));

  std::vector<int> perm(nr);
  for (int i = 0; i < nr; ++i) perm[i] = i;
  // Pivots of a dependent row are rounding noise of size eps^2 * scale;
  // genuine ones stay far above this threshold.
  const double tol = 1e-12 * scale;
  std::vector<int> keep;
  for (int k = 0; k < nr; ++k) {
    int p = k;
    for (int i = k + 1; i < nr; ++i)
      if (gram(perm[i], perm[i]) > gram(perm[p], perm[p])) p = i;
    std::swap(perm[k], perm[p]);
    const int r = perm[k];
    const double piv = gram(r, r);
    if (!(piv > tol)) break;
    keep.push_back(r);
    // Schur update of the remaining block.
    for (int i = k + 1; i < nr; ++i) {
      const double f = gram(perm[i], r) / piv;
      for (int j = k + 1; j < nr; ++j) gram(perm[i], perm[j]) -= f * gram(r, perm[j]);
    }
  }
  std::sort(keep.begin(), keep.end());
  return keep;
}

}  // namespace

PatchSystem::PatchSystem(const Discretization& d, ElementSet patch)
    : disc_(&d), patch_(std::move(patch)) {
  const Mesh& cm = *d.coarse_mesh;
  const Mesh& fm = *d.fine_mesh;
  std::vector<std::uint8_t> in_patch(fm.num_triangles(), 0);
  for (int K : patch_.cells) {
    if (K < 0 || K >= cm.num_triangles()) throw InvalidArgument("patch cell out of range");
    for (int t : d.map.fine_cells_of_coarse[K]) in_patch[t] = 1;
  }
  // Fine cells of the patch, grouped into components joined by active edges.
  std::vector<int> parent(fm.num_triangles(), -1);
  auto find = [&](int t) {
    while (parent[t] != t) t = parent[t] = parent[parent[t]];
    return t;
  };
  for (int K : patch_.cells) {
    for (int t : d.map.fine_cells_of_coarse[K]) {
      cells_.push_back(t);
      parent[t] = t;
    }
  }
  for (int t : cells_) {
    for (int i = 0; i < 3; ++i) {
      const int dof = d.fine.dof(t, i);
      if (dof < 0) continue;
      const auto& adj = fm.edge_triangles(fm.triangle_edges(t)[i]);
      if (!in_patch[adj[0]] || !in_patch[adj[1]]) continue;
      dofs_.push_back(dof);
      parent[find(adj[0])] = find(adj[1]);
    }
  }
  std::sort(dofs_.begin(), dofs_.end());
  dofs_.erase(std::unique(dofs_.begin(), dofs_.end()), dofs_.end());
  const int na = static_cast<int>(dofs_.size());
  std::vector<int> local(d.fine.num_dofs(), -1);
  for (int a = 0; a < na; ++a) local[dofs_[a]] = a;

  // Total flux out of each component vanishes; drop one divergence row each.
  std::vector<int> rows_cells;
  for (int t : cells_) {
    if (find(t) == t) continue;
    rows_cells.push_back(t);
  }
  div_cells_ = rows_cells;

  std::vector<std::uint8_t> touched(d.coarse.num_dofs(), 0);
  for (int dof : dofs_) {
    for (SparseMatrix::InnerIterator it(d.pi, dof); it; ++it) touched[it.index()] = 1;
  }
  std::vector<int> candidates;
  for (int r = 0; r < d.coarse.num_dofs(); ++r)
    if (touched[r]) candidates.push_back(r);
  for (int k : independent_pi_rows(d, candidates, local, in_patch)) pi_rows_.push_back(candidates[k]);
  dropped_rows_ = static_cast<int>(candidates.size() - pi_rows_.size());

  std::vector<Triplet> trip;
  for (int a = 0; a < na; ++a) {
    for (SparseMatrix::InnerIterator it(d.fine_mass, dofs_[a]); it; ++it) {
      const int b = local[it.index()];
      if (b >= 0) trip.emplace_back(b, a, it.value());
    }
  }
  int row = na;
  auto put = [&](int r, int a, double v) {
    trip.emplace_back(r, a, v);
    trip.emplace_back(a, r, v);
  };
  for (int t : div_cells_) {
    for (int i = 0; i < 3; ++i) {
      const int dof = d.fine.dof(t, i);
      const int a = dof >= 0 ? local[dof] : -1;
      if (a >= 0) put(row, a, d.fine.sign(t, i));
    }
    ++row;
  }
  num_div_rows_ = row - na;
  for (int r : pi_rows_) {
    for (SparseMatrix::InnerIterator it(d.pi_t, r); it; ++it) {
      const int a = local[it.index()];
      if (a >= 0) put(row, a, it.value());
    }
    ++row;
  }
  matrix_.resize(row, row);
  matrix_.setFromTriplets(trip.begin(), trip.end());

  // Block elimination: the Pi rows are wide, so factor only the mixed block
  // and treat the few Pi rows through a dense Schur complement.
  const int nm = na + num_div_rows_;
  const int np = static_cast<int>(pi_rows_.size());
  lu_ = std::make_unique<SparseLU>(SparseMatrix(matrix_.topLeftCorner(nm, nm)));
  if (np > 0) {
    const SparseMatrix pt = matrix_.block(0, nm, nm, np);
    coupling_ = lu_->solve(DenseMatrix(pt));
    const DenseMatrix schur = SparseMatrix(pt.transpose()) * coupling_;
    schur_ = std::make_unique<Eigen::PartialPivLU<DenseMatrix>>(schur);
    const auto& u = schur_->matrixLU();
    const double scale = std::max(1e-300, schur.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < u.rows(); ++i) {
      if (!(std::abs(u(i, i)) > 1e-12 * scale)) throw SolverError("singular interpolation block");
    }
  }
}

DenseMatrix PatchSystem::solve_full(const DenseMatrix& rhs) const {
  const int nm = static_cast<int>(dofs_.size()) + num_div_rows_;
  const int np = static_cast<int>(pi_rows_.size());
  DenseMatrix x(matrix_.rows(), rhs.cols());
  x.topRows(nm) = lu_->solve(DenseMatrix(rhs.topRows(nm)));
  if (np > 0) {
    const SparseMatrix p = matrix_.block(nm, 0, np, nm);
    const DenseMatrix lambda = schur_->solve(p * x.topRows(nm) - rhs.bottomRows(np));
    x.topRows(nm) -= coupling_ * lambda;
    x.bottomRows(np) = lambda;
  }
  return x;
}

int PatchSystem::local_index(int fine_dof) const {
  const auto it = std::lower_bound(dofs_.begin(), dofs_.end(), fine_dof);
  return (it != dofs_.end() && *it == fine_dof) ? static_cast<int>(it - dofs_.begin()) : -1;
}

DenseMatrix PatchSystem::solve(const DenseMatrix& velocity_rhs) const {
  const int na = static_cast<int>(dofs_.size());
  if (velocity_rhs.rows() != na) throw InvalidArgument("right side does not match the patch");
  DenseMatrix rhs = DenseMatrix::Zero(matrix_.rows(), velocity_rhs.cols());
  rhs.topRows(na) = velocity_rhs;
  return solve_full(rhs).topRows(na);
}

Vector PatchSystem::solve(const Vector& velocity_rhs, const Vector& div_density) const {
  const Discretization& d = *disc_;
  const int na = static_cast<int>(dofs_.size());
  if (velocity_rhs.size() != na) throw InvalidArgument("right side does not match the patch");
  if (div_density.size() != d.fine_mesh->num_triangles()) {
    throw InvalidArgument("divergence data must hold one value per fine cell");
  }
  Vector rhs = Vector::Zero(matrix_.rows());
  rhs.head(na) = velocity_rhs;
  for (std::size_t k = 0; k < div_cells_.size(); ++k) {
    const int t = div_cells_[k];
    rhs[na + static_cast<Eigen::Index>(k)] = div_density[t] * d.fine_mesh->area(t);
  }
  return solve_full(rhs).col(0).head(na);
}

Vector CorrectorSet::apply(const Discretization& disc, const Vector& coarse) const {
  if (coarse.size() != disc.coarse.num_dofs()) throw InvalidArgument("coarse vector has wrong size");
  Vector out = Vector::Zero(disc.fine.num_dofs());
  for (int T = 0; T < num_elements(); ++T) {
    Eigen::Vector3d c = Eigen::Vector3d::Zero();
    for (int i = 0; i < 3; ++i) {
      const int j = disc.coarse.dof(T, i);
      if (j >= 0) c[i] = coarse[j];
    }
    const Vector local = blocks[T] * c;
    for (std::size_t a = 0; a < dofs[T].size(); ++a) out[dofs[T][a]] += local[a];
  }
  return out;
}

ElementSet corrector_patch(const Discretization& disc, int T, int layers) {
  const Mesh& cm = *disc.coarse_mesh;
  if (T < 0 || T >= cm.num_triangles()) throw InvalidArgument("coarse element out of range");
  if (layers == kIdealLayers) {
    ElementSet all;
    all.cells.resize(cm.num_triangles());
    for (int k = 0; k < cm.num_triangles(); ++k) all.cells[k] = k;
    all.layers = kIdealLayers;
    return all;
  }
  if (layers < 0) throw InvalidArgument("patch layer count must be nonnegative");
  return element_patch(cm, T, layers);
}

DenseMatrix element_corrector_rhs(const Discretization& d, const PatchSystem& system, int T) {
  const Mesh& fm = *d.fine_mesh;
  DenseMatrix rhs = DenseMatrix::Zero(static_cast<Eigen::Index>(system.dofs().size()), 3);
  for (int i = 0; i < 3; ++i) {
    const int j = d.coarse.dof(T, i);
    if (j < 0) continue;
    for (int t : d.map.fine_cells_of_coarse[T]) {
      Eigen::Vector3d loc = Eigen::Vector3d::Zero();
      for (int k = 0; k < 3; ++k) {
        const int dof = d.fine.dof(t, k);
        if (dof >= 0) loc[k] = d.fine.sign(t, k) * d.prolongation.coeff(dof, j);
      }
      const Eigen::Vector3d r = rt0::local_mass(fm, t) * loc / d.coeff[t];
      for (int k = 0; k < 3; ++k) {
        const int dof = d.fine.dof(t, k);
        if (dof < 0) continue;
        const int a = system.local_index(dof);
        if (a >= 0) rhs(a, i) += d.fine.sign(t, k) * r[k];
      }
    }
  }
  return rhs;
}

namespace {

std::string patch_context(int T, int layers) {
  return "coarse element " + std::to_string(T) + ", layers " +
         (layers == kIdealLayers ? std::string("ideal") : std::to_string(layers));
}

std::unique_ptr<PatchSystem> make_system(const Discretization& d, int T, int layers) {
  try {
    return std::make_unique<PatchSystem>(d, corrector_patch(d, T, layers));
  } catch (const SolverError& e) {
    throw SolverError(std::string("singular patch system (") + patch_context(T, layers) +
                      "): " + e.what());
  }
}

// Groups of elements with identical patches, in order of first element.
std::vector<std::vector<int>> group_by_patch(const Discretization& d, int layers,
                                             std::vector<ElementSet>& patches) {
  const int nc = d.coarse_mesh->num_triangles();
  patches.resize(nc);
  std::map<std::vector<int>, int> index;
  std::vector<std::vector<int>> groups;
  for (int T = 0; T < nc; ++T) {
    patches[T] = corrector_patch(d, T, layers);
    auto [it, inserted] = index.emplace(patches[T].cells, static_cast<int>(groups.size()));
    if (inserted) groups.emplace_back();
    groups[it->second].push_back(T);
  }
  return groups;
}

Vector source_density(const Discretization& d, int T, const Vector& fine_load) {
  const Mesh& fm = *d.fine_mesh;
  Vector g = Vector::Zero(fm.num_triangles());
  const auto& kids = d.map.fine_cells_of_coarse[T];
  double total = 0.0, scale = 0.0;
  for (int t : kids) {
    total += fine_load[t];
    scale += std::abs(fine_load[t]);
  }
  const double mean = total / d.coarse_mesh->area(T);
  double check = 0.0;
  for (int t : kids) {
    g[t] = -(fine_load[t] / fm.area(t) - mean);
    check += g[t] * fm.area(t);
  }
  if (std::abs(check) > 1e-12 * std::max(scale, 1e-300) && std::abs(check) > 1e-300) {
    throw CompatibilityError("source corrector data is not mean-free on coarse element " +
                             std::to_string(T));
  }
  return g;
}

}  // namespace

Vector solve_element_corrector(const Discretization& d, int T, int layers, int local_edge) {
  if (local_edge < 0 || local_edge > 2) throw InvalidArgument("local edge must be 0, 1 or 2");
  const auto system = make_system(d, T, layers);
  const DenseMatrix sol = system->solve(element_corrector_rhs(d, *system, T));
  Vector out = Vector::Zero(d.fine.num_dofs());
  for (std::size_t a = 0; a < system->dofs().size(); ++a) {
    out[system->dofs()[a]] = sol(static_cast<Eigen::Index>(a), local_edge);
  }
  return out;
}

CorrectorSet compute_all_correctors(const Discretization& d, int layers, int threads) {
  CorrectorSet set;
  set.layers = layers;
  const auto groups = group_by_patch(d, layers, set.patches);
  const int nc = d.coarse_mesh->num_triangles();
  set.dofs.resize(nc);
  set.blocks.resize(nc);
  parallel_for(static_cast<int>(groups.size()), threads, [&](int g) {
    const auto system = make_system(d, groups[g].front(), layers);
    const auto& members = groups[g];
    DenseMatrix rhs(static_cast<Eigen::Index>(system->dofs().size()),
                    3 * static_cast<Eigen::Index>(members.size()));
    for (std::size_t k = 0; k < members.size(); ++k) {
      rhs.middleCols(3 * static_cast<Eigen::Index>(k), 3) =
          element_corrector_rhs(d, *system, members[k]);
    }
    const DenseMatrix sol = system->solve(rhs);
    for (std::size_t k = 0; k < members.size(); ++k) {
      set.dofs[members[k]] = system->dofs();
      set.blocks[members[k]] = sol.middleCols(3 * static_cast<Eigen::Index>(k), 3);
    }
  });
  return set;
}

Vector solve_source_corrector(const Discretization& d, int T, int layers,
                              const Vector& fine_load) {
  if (fine_load.size() != d.fine_mesh->num_triangles()) {
    throw InvalidArgument("fine load must hold one value per fine cell");
  }
  const Vector g = source_density(d, T, fine_load);
  const auto system = make_system(d, T, layers);
  const Vector sol = system->solve(Vector::Zero(static_cast<Eigen::Index>(system->dofs().size())), g);
  Vector out = Vector::Zero(d.fine.num_dofs());
  for (std::size_t a = 0; a < system->dofs().size(); ++a) out[system->dofs()[a]] = sol[a];
  return out;
}

Vector compute_source_correction(const Discretization& d, int layers, const Vector& fine_load,
                                 int threads) {
  if (fine_load.size() != d.fine_mesh->num_triangles()) {
    throw InvalidArgument("fine load must hold one value per fine cell");
  }
  std::vector<ElementSet> patches;
  const auto groups = group_by_patch(d, layers, patches);
  const int nc = d.coarse_mesh->num_triangles();
  std::vector<Vector> parts(nc);
  std::vector<std::vector<int>> part_dofs(nc);
  parallel_for(static_cast<int>(groups.size()), threads, [&](int g) {
    const auto system = make_system(d, groups[g].front(), layers);
    const Vector zero = Vector::Zero(static_cast<Eigen::Index>(system->dofs().size()));
    for (int T : groups[g]) {
      parts[T] = system->solve(zero, source_density(d, T, fine_load));
      part_dofs[T] = system->dofs();
    }
  });
  Vector out = Vector::Zero(d.fine.num_dofs());
  for (int T = 0; T < nc; ++T) {
    for (std::size_t a = 0; a < part_dofs[T].size(); ++a) out[part_dofs[T][a]] += parts[T][a];
  }
  return out;
}

}  // namespace rtlod
