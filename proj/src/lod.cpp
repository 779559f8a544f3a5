#include "rtlod/lod.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rtlod/errors.hpp"
#include "rtlod/linsolve.hpp"

namespace rtlod {

namespace {

void check_compatible(const Vector& load, double tol) {
  const double total = load.sum();
  const double scale = load.cwiseAbs().sum();
  if (std::abs(total) > tol * std::max(scale, 1.0)) {
    throw CompatibilityError("source does not integrate to zero (sum " + std::to_string(total) +
                             ")");
  }
}

}  // namespace

Vector compatible_load(const Vector& load, const std::vector<double>& areas, double tol) {
  if (load.size() != static_cast<Eigen::Index>(areas.size())) {
    throw InvalidArgument("load does not match the mesh");
  }
  check_compatible(load, tol);
  double total = 0.0;
  for (double a : areas) total += a;
  Vector out = load;
  const double shift = load.sum() / total;
  for (std::size_t i = 0; i < areas.size(); ++i) out[static_cast<Eigen::Index>(i)] -= shift * areas[i];
  return out;
}

namespace {

double mean_by_area(const Vector& values, const std::vector<double>& areas) {
  double s = 0.0, a = 0.0;
  for (std::size_t i = 0; i < areas.size(); ++i) {
    s += values[static_cast<Eigen::Index>(i)] * areas[i];
    a += areas[i];
  }
  return s / a;
}

}  // namespace

SaddleSolution solve_saddle(const SparseMatrix& a, const SparseMatrix& b,
                            const std::vector<double>& cell_areas, const Vector& velocity_rhs,
                            const Vector& pressure_rhs, const std::string& context) {
  const int nv = static_cast<int>(a.rows());
  const int np = static_cast<int>(b.rows());
  if (b.cols() != nv || static_cast<int>(cell_areas.size()) != np ||
      velocity_rhs.size() != nv || pressure_rhs.size() != np) {
    throw InvalidArgument("inconsistent saddle-point dimensions (" + context + ")");
  }
  // The mean-zero pressure constraint is a dense row that ruins the sparse
  // ordering. Its multiplier only absorbs the load imbalance, so remove that
  // first, pin the first pressure, and restore the mean afterwards.
  double area_sum = 0.0;
  for (double s : cell_areas) area_sum += s;
  const double multiplier = pressure_rhs.sum() / area_sum;
  Vector g = pressure_rhs;
  for (int i = 0; i < np; ++i) g[i] -= multiplier * cell_areas[i];

  std::vector<Triplet> trip;
  trip.reserve(a.nonZeros() + 2 * b.nonZeros() + 1);
  for (int k = 0; k < a.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(a, k); it; ++it) trip.emplace_back(it.row(), it.col(), it.value());
  for (int k = 0; k < b.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(b, k); it; ++it) {
      if (it.row() == 0) continue;
      trip.emplace_back(nv + it.row(), it.col(), it.value());
      trip.emplace_back(it.col(), nv + it.row(), it.value());
    }
  }
  trip.emplace_back(nv, nv, 1.0);
  SparseMatrix k(nv + np, nv + np);
  k.setFromTriplets(trip.begin(), trip.end());
  Vector rhs(nv + np);
  rhs.head(nv) = velocity_rhs;
  rhs.segment(nv, np) = g;
  rhs[nv] = 0.0;
  const SparseLU lu(k, context);
  const Vector x = lu.solve(rhs);
  SaddleSolution out;
  out.velocity = x.head(nv);
  out.pressure = x.segment(nv, np);
  out.pressure.array() -= mean_by_area(out.pressure, cell_areas);
  out.multiplier = multiplier;
  // Residual of the full constrained system.
  const Vector rv = a * out.velocity + b.transpose() * out.pressure - velocity_rhs;
  Vector rp = b * out.velocity - pressure_rhs;
  for (int i = 0; i < np; ++i) rp[i] += multiplier * cell_areas[i];
  const double denom =
      std::max(std::sqrt(velocity_rhs.squaredNorm() + pressure_rhs.squaredNorm()), 1e-300);
  out.relative_residual = std::sqrt(rv.squaredNorm() + rp.squaredNorm()) / denom;
  return out;
}

ReferenceSolution solve_reference(const RTSpace& velocity, const PressureSpace& pressure,
                                  const CoefficientField& coeff, const Vector& load) {
  const Vector f = compatible_load(load, pressure.measures());
  const SparseMatrix a = assemble_weighted_mass(velocity, coeff);
  const SparseMatrix b = assemble_div_matrix(velocity, pressure);
  const SaddleSolution s = solve_saddle(a, b, pressure.measures(), Vector::Zero(a.rows()), -f,
                                        "fine reference problem");
  ReferenceSolution out{s.velocity, s.pressure, s.relative_residual};
  out.pressure.array() -= mean_by_area(out.pressure, pressure.measures());
  return out;
}

ReferenceSolution solve_reference(const Discretization& d, const Vector& fine_load) {
  return solve_reference(d.fine, d.fine_pressure, d.coeff, fine_load);
}

Vector coarse_load(const Discretization& d, const Vector& fine_load) {
  if (fine_load.size() != d.fine_mesh->num_triangles()) {
    throw InvalidArgument("fine load must hold one value per fine cell");
  }
  Vector out = Vector::Zero(d.coarse_mesh->num_triangles());
  for (int t = 0; t < d.fine_mesh->num_triangles(); ++t) out[d.map.coarse_of_fine[t]] += fine_load[t];
  return out;
}

namespace {

void check_correctors(const Discretization& d, const CorrectorSet& q) {
  if (q.num_elements() != d.coarse_mesh->num_triangles()) {
    throw InvalidState("correctors are missing for some coarse elements");
  }
  for (int T = 0; T < q.num_elements(); ++T) {
    if (q.blocks[T].rows() != static_cast<Eigen::Index>(q.dofs[T].size()) || q.blocks[T].cols() != 3) {
      throw InvalidState("corrector of coarse element " + std::to_string(T) + " is missing");
    }
  }
}

}  // namespace

Vector multiscale_velocity(const Discretization& d, const CorrectorSet& q, const Vector& coarse) {
  check_correctors(d, q);
  return d.prolongation * coarse - q.apply(d, coarse);
}

SparseMatrix multiscale_stiffness(const Discretization& d, const CorrectorSet& q) {
  check_correctors(d, q);
  const Mesh& cm = *d.coarse_mesh;
  const Mesh& fm = *d.fine_mesh;
  const int nH = d.coarse.num_dofs();
  if (nH > 40000) throw UnsupportedFeature("coarse space too large for dense accumulation");
  // Elements whose patch contains K.
  std::vector<std::vector<int>> reaching(cm.num_triangles());
  for (int T = 0; T < q.num_elements(); ++T)
    for (int K : q.patches[T].cells) reaching[K].push_back(T);

  DenseMatrix k = DenseMatrix::Zero(nH, nH);
  std::vector<int> col_of(nH, -1);
  for (int K = 0; K < cm.num_triangles(); ++K) {
    const auto& kids = d.map.fine_cells_of_coarse[K];
    std::vector<int> rows;
    for (int t : kids)
      for (int i = 0; i < 3; ++i)
        if (d.fine.dof(t, i) >= 0) rows.push_back(d.fine.dof(t, i));
    std::sort(rows.begin(), rows.end());
    rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
    auto row_of = [&](int dof) {
      return static_cast<int>(std::lower_bound(rows.begin(), rows.end(), dof) - rows.begin());
    };
    const int nr = static_cast<int>(rows.size());
    DenseMatrix a = DenseMatrix::Zero(nr, nr);
    for (int t : kids) {
      const Eigen::Matrix3d m = rt0::local_mass(fm, t) / d.coeff[t];
      std::array<int, 3> r{};
      for (int i = 0; i < 3; ++i) r[i] = d.fine.dof(t, i) >= 0 ? row_of(d.fine.dof(t, i)) : -1;
      for (int i = 0; i < 3; ++i) {
        if (r[i] < 0) continue;
        for (int j = 0; j < 3; ++j) {
          if (r[j] >= 0) a(r[i], r[j]) += d.fine.sign(t, i) * d.fine.sign(t, j) * m(i, j);
        }
      }
    }
    std::vector<int> cols;
    for (int i = 0; i < 3; ++i)
      if (d.coarse.dof(K, i) >= 0) cols.push_back(d.coarse.dof(K, i));
    for (int T : reaching[K])
      for (int i = 0; i < 3; ++i)
        if (d.coarse.dof(T, i) >= 0) cols.push_back(d.coarse.dof(T, i));
    std::sort(cols.begin(), cols.end());
    cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
    for (std::size_t c = 0; c < cols.size(); ++c) col_of[cols[c]] = static_cast<int>(c);

    DenseMatrix x = DenseMatrix::Zero(nr, static_cast<Eigen::Index>(cols.size()));
    for (int i = 0; i < 3; ++i) {
      const int j = d.coarse.dof(K, i);
      if (j < 0) continue;
      for (SparseMatrix::InnerIterator it(d.prolongation, j); it; ++it) {
        const auto pos = std::lower_bound(rows.begin(), rows.end(), static_cast<int>(it.index()));
        if (pos != rows.end() && *pos == it.index()) x(pos - rows.begin(), col_of[j]) += it.value();
      }
    }
    for (int T : reaching[K]) {
      const auto& tdofs = q.dofs[T];
      for (int r = 0; r < nr; ++r) {
        const auto pos = std::lower_bound(tdofs.begin(), tdofs.end(), rows[r]);
        if (pos == tdofs.end() || *pos != rows[r]) continue;
        const auto a_idx = pos - tdofs.begin();
        for (int i = 0; i < 3; ++i) {
          const int j = d.coarse.dof(T, i);
          if (j >= 0) x(r, col_of[j]) -= q.blocks[T](a_idx, i);
        }
      }
    }
    const DenseMatrix local = x.transpose() * a * x;
    for (std::size_t c1 = 0; c1 < cols.size(); ++c1)
      for (std::size_t c2 = 0; c2 < cols.size(); ++c2) k(cols[c1], cols[c2]) += local(c1, c2);
    for (int c : cols) col_of[c] = -1;
  }
  // Symmetrize away rounding differences.
  const DenseMatrix sym = 0.5 * (k + k.transpose());
  return sym.sparseView(0.0, 0.0);
}

MultiscaleSolution assemble_and_solve_lod(const Discretization& d, const CorrectorSet& q,
                                          const Vector& fine_load,
                                          const Vector* source_correction,
                                          std::optional<int> source_layers) {
  check_correctors(d, q);
  const Vector f = compatible_load(fine_load, d.fine_mesh->areas());
  const SparseMatrix k = multiscale_stiffness(d, q);
  Vector g = Vector::Zero(d.coarse.num_dofs());
  if (source_correction) {
    if (source_correction->size() != d.fine.num_dofs()) {
      throw InvalidArgument("source correction does not match the fine space");
    }
    // g = -R^T A r with R = E - Q.
    const Vector ar = d.fine_mass * (*source_correction);
    g = -(SparseMatrix(d.prolongation.transpose()) * ar);
    for (int T = 0; T < q.num_elements(); ++T) {
      for (int i = 0; i < 3; ++i) {
        const int j = d.coarse.dof(T, i);
        if (j < 0) continue;
        double s = 0.0;
        for (std::size_t a = 0; a < q.dofs[T].size(); ++a) s += q.blocks[T](static_cast<Eigen::Index>(a), i) * ar[q.dofs[T][a]];
        g[j] += s;
      }
    }
  }
  const Vector fH = coarse_load(d, f);
  const SaddleSolution s = solve_saddle(k, d.coarse_div, d.coarse_mesh->areas(), g, -fH,
                                        "coarse multiscale system");
  MultiscaleSolution out;
  out.coarse_coefficients = s.velocity;
  out.coarse_pressure = s.pressure;
  out.coarse_pressure.array() -= mean_by_area(out.coarse_pressure, d.coarse_mesh->areas());
  out.fine_velocity = multiscale_velocity(d, q, s.velocity);
  if (source_correction) out.fine_velocity += *source_correction;
  out.layers = q.layers;
  out.source_layers = source_correction ? source_layers : std::nullopt;
  out.H = d.coarse_mesh->h_max();
  out.h = d.fine_mesh->h_max();
  return out;
}

MultiscaleSolution ideal_mode(const Discretization& d, const Vector& fine_load,
                              bool source_correction, int threads) {
  const CorrectorSet q = compute_all_correctors(d, kIdealLayers, threads);
  if (!source_correction) return assemble_and_solve_lod(d, q, fine_load);
  const Vector r = compute_source_correction(d, kIdealLayers, fine_load, threads);
  return assemble_and_solve_lod(d, q, fine_load, &r, kIdealLayers);
}

}  // namespace rtlod
