#include <cmath>
#include <map>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "doctest.h"
#include "helpers.hpp"
#include "oracles.hpp"
#include "rtlod/corrector.hpp"
#include "rtlod/errors.hpp"
#include "rtlod/metrics.hpp"

using namespace rtlod;

namespace {

DiscretizationPtr make(int n, int levels, double block, double lo = 0.01) {
  return testing::make_disc(n, levels, block, lo);
}

Vector column(const CorrectorSet& q, const Discretization& d, int T, int i) {
  Vector out = Vector::Zero(d.fine.num_dofs());
  for (std::size_t a = 0; a < q.dofs[T].size(); ++a) out[q.dofs[T][a]] = q.blocks[T](a, i);
  return out;
}

}  // namespace

TEST_CASE("corrector columns lie in the divergence-free detail space") {
  const auto d = make(4, 2, 1.0 / 8);
  for (int m : {0, 1, 2, kIdealLayers}) {
    const CorrectorSet q = compute_all_correctors(*d, m);
    double pi_max = 0, div_max = 0;
    for (int T = 0; T < q.num_elements(); ++T) {
      for (int i = 0; i < 3; ++i) {
        const Vector c = column(q, *d, T, i);
        pi_max = std::max(pi_max, (d->pi * c).cwiseAbs().maxCoeff());
        div_max = std::max(div_max, (d->fine_div * c).cwiseAbs().maxCoeff());
        // Vanishes outside the patch.
        const ElementSet& p = q.patches[T];
        for (int t = 0; t < d->fine_mesh->num_triangles(); ++t) {
          if (p.contains(d->map.coarse_of_fine[t])) continue;
          for (int k = 0; k < 3; ++k) {
            const int dof = d->fine.dof(t, k);
            if (dof >= 0) REQUIRE(c[dof] == 0.0);
          }
        }
      }
    }
    CHECK(pi_max <= 1e-10);
    CHECK(div_max <= 1e-10);
  }
}

TEST_CASE("patch constraint block has full row rank") {
  const auto d = make(4, 1, 0.125);
  for (int m : {0, 1, 2, kIdealLayers}) {
    for (int T : {0, 9, 17}) {
      const PatchSystem sys(*d, corrector_patch(*d, T, m));
      const int na = static_cast<int>(sys.dofs().size());
      const DenseMatrix full = DenseMatrix(sys.matrix());
      CHECK((full - full.transpose()).cwiseAbs().maxCoeff() == 0.0);
      const DenseMatrix c = full.bottomLeftCorner(full.rows() - na, na);
      Eigen::JacobiSVD<DenseMatrix> svd(c, Eigen::ComputeFullV);
      const auto& s = svd.singularValues();
      CHECK(s[s.size() - 1] > 1e-8 * s[0]);
      // Velocity block is SPD on the constraint kernel.
      int rank = static_cast<int>(c.rows());
      const DenseMatrix kernel = svd.matrixV().rightCols(na - rank);
      if (kernel.cols() > 0) {
        const DenseMatrix proj = kernel.transpose() * full.topLeftCorner(na, na) * kernel;
        Eigen::SelfAdjointEigenSolver<DenseMatrix> eig(proj);
        CHECK(eig.eigenvalues().minCoeff() > 0);
      }
    }
  }
}

TEST_CASE("ideal correctors match the dense null-space oracle") {
  const auto d = make(2, 1, 0.25, 0.1);
  const DenseMatrix basis = testing::w_div0_basis(*d);
  REQUIRE(basis.cols() > 0);
  const CorrectorSet ideal = compute_all_correctors(*d, kIdealLayers);
  const CorrectorSet wide = compute_all_correctors(*d, 3);
  for (int T = 0; T < d->coarse_mesh->num_triangles(); ++T) {
    for (int i = 0; i < 3; ++i) {
      const int j = d->coarse.dof(T, i);
      const Vector got = column(ideal, *d, T, i);
      if (j < 0) {
        CHECK(got.cwiseAbs().maxCoeff() == 0.0);
        continue;
      }
      const Vector v = d->prolongation.col(j);
      const Vector expect = testing::ideal_corrector_oracle(*d, basis, T, v);
      CHECK((got - expect).cwiseAbs().maxCoeff() <= 1e-10 * std::max(1.0, expect.cwiseAbs().maxCoeff()));
      CHECK((column(wide, *d, T, i) - got).cwiseAbs().maxCoeff() <= 1e-10);
      CHECK((solve_element_corrector(*d, T, kIdealLayers, i) - got).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
}

TEST_CASE("saturated layers reproduce the ideal correctors") {
  const auto d = make(4, 1, 0.125);
  const CorrectorSet ideal = compute_all_correctors(*d, kIdealLayers);
  const CorrectorSet sat = compute_all_correctors(*d, 8);
  double diff = 0;
  for (int T = 0; T < ideal.num_elements(); ++T)
    for (int i = 0; i < 3; ++i)
      diff = std::max(diff, (column(ideal, *d, T, i) - column(sat, *d, T, i)).cwiseAbs().maxCoeff());
  CHECK(diff <= 1e-10);
}

TEST_CASE("boundary edges and unrelated targets give zero correctors") {
  const auto d = make(2, 1, 0);
  // Coarse triangle 0 has a boundary edge.
  int boundary_edge = -1;
  for (int i = 0; i < 3; ++i)
    if (d->coarse.dof(0, i) < 0) boundary_edge = i;
  REQUIRE(boundary_edge >= 0);
  CHECK(solve_element_corrector(*d, 0, 1, boundary_edge).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(solve_element_corrector(*d, 0, 1, 3), InvalidArgument);
  CHECK_THROWS_AS(corrector_patch(*d, 99, 1), InvalidArgument);
}

TEST_CASE("constant coefficient correctors are translation invariant") {
  const auto d = make(6, 1, 0);
  const CorrectorSet q = compute_all_correctors(*d, 1);
  const Mesh& fm = *d->fine_mesh;
  const double shift = 1.0 / 6;
  auto key = [](Point p) {
    return std::pair<long, long>(std::lround(p.x * 1e6), std::lround(p.y * 1e6));
  };
  std::map<std::pair<long, long>, int> dof_at;
  for (int dof = 0; dof < d->fine.num_dofs(); ++dof) dof_at[key(fm.edge_midpoint(d->fine.edge_of_dof(dof)))] = dof;
  // Interior elements two squares apart along x (triangle index + 2).
  for (int T : {2 * (2 * 6 + 2), 2 * (2 * 6 + 2) + 1}) {
    const int S = T + 2;
    for (int i = 0; i < 3; ++i) {
      const Vector a = column(q, *d, T, i);
      const Vector b = column(q, *d, S, i);
      double diff = 0;
      for (int dof = 0; dof < d->fine.num_dofs(); ++dof) {
        if (a[dof] == 0.0) continue;
        const Point p = fm.edge_midpoint(d->fine.edge_of_dof(dof));
        diff = std::max(diff, std::abs(a[dof] - b[dof_at.at(key({p.x + shift, p.y}))]));
      }
      CHECK(diff <= 1e-10);
    }
  }
}

TEST_CASE("corrector tails decay with the layer count") {
  const auto d = make(8, 2, 1.0 / 16);
  const int T = 2 * (3 * 8 + 3);
  const Vector c = solve_element_corrector(*d, T, kIdealLayers, 0);
  const std::vector<int> layers{0, 1, 2, 3, 4};
  const auto tails = corrector_tail(*d, c, T, layers);
  CHECK(tails[0] <= energy_norm(c, d->fine_mass) * (1 + 1e-12));
  for (std::size_t k = 1; k < tails.size(); ++k) CHECK(tails[k] <= tails[k - 1]);
  std::vector<double> x, y;
  for (std::size_t k = 1; k < tails.size(); ++k) {
    x.push_back(layers[k]);
    y.push_back(std::log(tails[k]));
  }
  CHECK(fit_line(x, y).slope < 0);
}

TEST_CASE("source correctors") {
  const auto d = make(2, 1, 0.25, 0.1);
  const Mesh& fm = *d->fine_mesh;
  // Coarse-cellwise constant data needs no correction.
  Vector flat(fm.num_triangles());
  for (int t = 0; t < fm.num_triangles(); ++t) flat[t] = (d->map.coarse_of_fine[t] % 2 ? 1.0 : -1.0) * fm.area(t);
  CHECK(compute_source_correction(*d, kIdealLayers, flat).cwiseAbs().maxCoeff() <= 1e-14);

  const Vector f = testing::random_vector(fm.num_triangles(), 42);
  const DenseMatrix basis = testing::w_div0_basis(*d);
  const DenseMatrix a = DenseMatrix(d->fine_mass);
  Vector total = Vector::Zero(d->fine.num_dofs());
  for (int T = 0; T < d->coarse_mesh->num_triangles(); ++T) {
    const Vector r = solve_source_corrector(*d, T, kIdealLayers, f);
    total += r;
    // Oracle: least-squares particular solution of [Pi; B_h] r = [0; g |t|],
    // then remove its a-projection onto W_div0.
    Vector g = Vector::Zero(fm.num_triangles());
    double sum = 0;
    for (int t : d->map.fine_cells_of_coarse[T]) sum += f[t];
    for (int t : d->map.fine_cells_of_coarse[T]) g[t] = -(f[t] - sum * fm.area(t) / d->coarse_mesh->area(T));
    DenseMatrix c(d->pi.rows() + d->fine_div.rows(), d->fine.num_dofs());
    c.topRows(d->pi.rows()) = DenseMatrix(d->pi);
    c.bottomRows(d->fine_div.rows()) = DenseMatrix(d->fine_div);
    Vector rhs = Vector::Zero(c.rows());
    rhs.tail(fm.num_triangles()) = g;
    const Vector r0 = c.completeOrthogonalDecomposition().solve(rhs);
    const Vector proj = basis * (basis.transpose() * a * basis).ldlt().solve(basis.transpose() * a * r0);
    const Vector expect = r0 - proj;
    CHECK((r - expect).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK((d->pi * r).cwiseAbs().maxCoeff() <= 1e-10);
  }
  // Divergence of the summed correction is -(id - P_H) f cellwise.
  const Vector div = d->fine_div * total;
  const Vector pf = d->projection * Vector((f.array() / Eigen::Map<const Vector>(fm.areas().data(), fm.num_triangles()).array()).matrix());
  for (int t = 0; t < fm.num_triangles(); ++t) {
    const double density = f[t] / fm.area(t) - pf[d->map.coarse_of_fine[t]];
    CHECK(std::abs(div[t] / fm.area(t) + density) <= 1e-10);
  }
  CHECK((compute_source_correction(*d, kIdealLayers, f) - total).cwiseAbs().maxCoeff() <= 1e-12);
}
