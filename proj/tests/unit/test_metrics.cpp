#include <cmath>
#include <numbers>

#include "doctest.h"
#include "helpers.hpp"
#include "oracles.hpp"
#include "rtlod/errors.hpp"
#include "rtlod/lod.hpp"
#include "rtlod/metrics.hpp"
#include "rtlod/quadrature.hpp"

using namespace rtlod;

namespace {

constexpr double kPi = std::numbers::pi;

double smooth_source(Point p) {
  return 2 * kPi * kPi * std::cos(kPi * p.x) * std::cos(kPi * p.y);
}

SparseMatrix diagonal(const std::vector<double>& v) {
  SparseMatrix m(static_cast<Eigen::Index>(v.size()), static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) m.insert(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = v[i];
  return m;
}

// Integral of (x - mean x)^2 over a triangle.
double x_variance_integral(const Mesh& m, int t) {
  const auto& tri = m.triangle(t);
  const double a = m.vertex(tri[0]).x, b = m.vertex(tri[1]).x, c = m.vertex(tri[2]).x;
  return m.area(t) * (a * a + b * b + c * c - a * b - a * c - b * c) / 18.0;
}

}  // namespace

TEST_CASE("energy error") {
  const auto g = testing::TwoGrid::make(4, 1);
  const auto unit = CoefficientField::constant(*g.fine, 1.0);
  const SparseMatrix a = assemble_weighted_mass(g.vh, unit);
  const Vector u = testing::random_vector(g.vh.num_dofs(), 1);
  const Vector v = testing::random_vector(g.vh.num_dofs(), 2);
  const Vector w = testing::random_vector(g.vh.num_dofs(), 3);

  CHECK(energy_error(u, u, a) == 0.0);
  CHECK(energy_error(u, v, a) == doctest::Approx(energy_error(v, u, a)).epsilon(1e-12));
  CHECK(energy_error(u, w, a) <= energy_error(u, v, a) + energy_error(v, w, a) + 1e-12);
  CHECK_THROWS_AS(relative_energy_error(u, Vector::Zero(u.size()), a), InvalidArgument);
  CHECK_THROWS_AS(energy_error(u, Vector::Zero(3), a), InvalidArgument);

  SUBCASE("unit coefficient gives the plain L2 distance") {
    const Mesh& m = *g.fine;
    const Vector diff = u - v;
    double s = 0;
    for (int t = 0; t < m.num_triangles(); ++t) {
      const auto& tri = m.triangle(t);
      for (const auto& qp : quad::kDegree4) {
        const Point x = quad::map_point(qp.lambda, m.vertex(tri[0]), m.vertex(tri[1]), m.vertex(tri[2]));
        const Point val = rt0::evaluate_in(g.vh, {diff.data(), static_cast<std::size_t>(diff.size())}, t, x);
        s += qp.weight * m.area(t) * (val.x * val.x + val.y * val.y);
      }
    }
    CHECK(energy_error(u, v, a) == doctest::Approx(std::sqrt(s)).epsilon(1e-12));
  }
  SUBCASE("scaling the coefficient by four halves the norm") {
    const SparseMatrix a4 = assemble_weighted_mass(g.vh, CoefficientField::constant(*g.fine, 4.0));
    CHECK(energy_norm(u, a4) == doctest::Approx(0.5 * energy_norm(u, a)).epsilon(1e-12));
  }
}

TEST_CASE("divergence error") {
  SUBCASE("coarse-cellwise constant data") {
    const auto d = testing::make_disc(2, 2, 0);
    const Mesh& fm = *d->fine_mesh;
    Vector f(fm.num_triangles());
    for (int t = 0; t < fm.num_triangles(); ++t) f[t] = (d->map.coarse_of_fine[t] + 1.0) * fm.area(t);
    CHECK(divergence_error(*d, f) <= 1e-14);
  }
  SUBCASE("linear data against the closed form") {
    const auto d = testing::make_disc(1, 3, 0);
    const Mesh& fm = *d->fine_mesh;
    const Mesh& cm = *d->coarse_mesh;
    const Vector f = assemble_load(d->fine_pressure, [](Point p) { return p.x; });
    double expect = 0;
    for (int T = 0; T < cm.num_triangles(); ++T) expect += x_variance_integral(cm, T);
    for (int t = 0; t < fm.num_triangles(); ++t) expect -= x_variance_integral(fm, t);
    CHECK(divergence_error(*d, f) == doctest::Approx(std::sqrt(expect)).epsilon(1e-12));
  }
  SUBCASE("first order in H for smooth data") {
    std::vector<double> errs, hs;
    for (int n : {2, 4, 8}) {
      const int levels = n == 2 ? 5 : (n == 4 ? 4 : 3);
      const auto d = testing::make_disc(n, levels, 0);
      errs.push_back(divergence_error(*d, assemble_load(d->fine_pressure, smooth_source)));
      hs.push_back(d->coarse_mesh->h_max());
    }
    for (double r : eoc(errs, hs)) CHECK(r == doctest::Approx(1.0).epsilon(0.2));
  }
}

TEST_CASE("divergence error matches the divergence of the LOD error") {
  const auto d = testing::make_disc(4, 2, 1.0 / 16, 0.001);
  const Vector f = assemble_load(d->fine_pressure, smooth_source);
  const ReferenceSolution ref = solve_reference(*d, f);
  const MultiscaleSolution s = assemble_and_solve_lod(*d, compute_all_correctors(*d, 2), f);
  const double lhs = divergence_distance(*d, ref.velocity, s.fine_velocity);
  const double rhs = divergence_error(*d, f);
  CHECK(std::abs(lhs - rhs) <= 1e-9 * rhs);
}

TEST_CASE("pressure error") {
  const auto d = testing::make_disc(2, 1, 0);
  const Vector coarse = testing::random_vector(d->coarse_mesh->num_triangles(), 5);
  Vector fine(d->fine_mesh->num_triangles());
  for (int t = 0; t < fine.size(); ++t) fine[t] = coarse[d->map.coarse_of_fine[t]];
  CHECK(relative_pressure_error(*d, fine, coarse) == 0.0);
  CHECK(relative_pressure_error(*d, fine, Vector::Zero(coarse.size())) == doctest::Approx(1.0));
  CHECK_THROWS_AS(relative_pressure_error(*d, Vector::Zero(fine.size()), coarse), InvalidArgument);
}

TEST_CASE("convergence orders") {
  auto r = eoc({4.0, 1.0}, {2.0, 1.0});
  REQUIRE(r.size() == 1);
  CHECK(r[0] == doctest::Approx(2.0));
  CHECK(eoc({3.0, 3.0}, {2.0, 1.0})[0] == 0.0);
  CHECK_THROWS_AS(eoc({1.0, 0.0}, {2.0, 1.0}), InvalidArgument);
  CHECK_THROWS_AS(eoc({1.0}, {2.0}), InvalidArgument);
  CHECK_THROWS_AS(eoc({1.0, 2.0}, {2.0}), InvalidArgument);

  std::vector<double> hs{0.5, 0.25, 0.125, 0.0625}, es;
  for (double h : hs) es.push_back(3 * h * h);
  const LinearFit fit = fit_order(es, hs);
  CHECK(fit.slope == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(fit.r_squared == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(fit_line({1.0, 1.0}, {0.0, 1.0}), InvalidArgument);
}

TEST_CASE("cell energies sum to the squared energy norm") {
  const auto d = testing::make_disc(2, 2, 0.25);
  const Vector u = testing::random_vector(d->fine.num_dofs(), 7);
  double s = 0;
  for (double e : cell_energy(*d, u)) s += e;
  CHECK(s == doctest::Approx(u.dot(d->fine_mass * u)).epsilon(1e-12));
  const auto tails = corrector_tail(*d, u, 0, {0, 1, 2});
  CHECK(tails[0] <= std::sqrt(s));
  CHECK(tails[2] <= tails[1]);
  CHECK(tails[1] <= tails[0]);
}

TEST_CASE("inf-sup estimates") {
  std::vector<double> values;
  for (int n : {2, 4, 8}) {
    auto mesh = std::make_shared<const Mesh>(build_structured_mesh(n, n, {}));
    const RTSpace v(mesh);
    const PressureSpace q(mesh);
    const double beta = infsup_estimate(assemble_div_matrix(v, q), hdiv_norm_matrix(v), diagonal(mesh->areas()));
    CHECK(beta > 0);
    values.push_back(beta);
  }
  CHECK(*std::max_element(values.begin(), values.end()) <= 2 * *std::min_element(values.begin(), values.end()));

  // Multiscale space: coarse divergence against the H(div) norm of (E - Q) phi.
  const auto d = testing::make_disc(4, 1, 1.0 / 8, 0.01);
  const CorrectorSet q = compute_all_correctors(*d, 1);
  const int nH = d->coarse.num_dofs();
  DenseMatrix r(d->fine.num_dofs(), nH);
  for (int j = 0; j < nH; ++j) r.col(j) = multiscale_velocity(*d, q, Vector::Unit(nH, j));
  const DenseMatrix norm_ms = r.transpose() * (hdiv_norm_matrix(d->fine) * r);
  const SparseMatrix mq = diagonal(d->coarse_mesh->areas());
  const double ms = infsup_estimate(d->coarse_div, norm_ms.sparseView(), mq);
  const double classical = infsup_estimate(d->coarse_div, hdiv_norm_matrix(d->coarse), mq);
  CHECK(ms > 0);
  CHECK(classical > 0);
  // Contrast 100 bounds the loss of stability.
  CHECK(ms >= classical / (1 + 100.0));
}

TEST_CASE("results rows") {
  CHECK(std::string(results_header()) == "experiment,H,h,m,ell,err_u_energy,err_p_l2,err_div,runtime_s");
  ErrorReport r;
  r.experiment = "convergence";
  r.H = 0.5;
  r.h = 0.25;
  r.m = 2;
  r.err_u_energy = 1e-3;
  r.runtime_s = 1.23456;
  CHECK(format_row(r) ==
        "convergence,5.000000000000e-01,2.500000000000e-01,2,-1,1.000000000000e-03,"
        "0.000000000000e+00,0.000000000000e+00,1.235");
}
