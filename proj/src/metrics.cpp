#include "rtlod/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <Eigen/Eigenvalues>

#include "rtlod/errors.hpp"
#include "rtlod/linsolve.hpp"

namespace rtlod {

double energy_norm(const Vector& u, const SparseMatrix& mass) {
  if (u.size() != mass.rows()) throw InvalidArgument("vector does not match the mass matrix");
  return std::sqrt(std::max(0.0, u.dot(mass * u)));
}

double energy_error(const Vector& u1, const Vector& u2, const SparseMatrix& mass) {
  if (u1.size() != u2.size()) throw InvalidArgument("fields live in different spaces");
  return energy_norm(u1 - u2, mass);
}

double relative_energy_error(const Vector& u1, const Vector& u2, const SparseMatrix& mass) {
  const double denom = energy_norm(u2, mass);
  if (!(denom > 0)) throw InvalidArgument("relative error against a zero reference");
  return energy_error(u1, u2, mass) / denom;
}

double relative_pressure_error(const Discretization& d, const Vector& fine_pressure,
                               const Vector& coarse_pressure) {
  const Mesh& fm = *d.fine_mesh;
  if (fine_pressure.size() != fm.num_triangles() ||
      coarse_pressure.size() != d.coarse_mesh->num_triangles()) {
    throw InvalidArgument("pressure vectors do not match the meshes");
  }
  double err = 0.0, ref = 0.0;
  for (int t = 0; t < fm.num_triangles(); ++t) {
    const double diff = fine_pressure[t] - coarse_pressure[d.map.coarse_of_fine[t]];
    err += diff * diff * fm.area(t);
    ref += fine_pressure[t] * fine_pressure[t] * fm.area(t);
  }
  if (!(ref > 0)) throw InvalidArgument("relative error against a zero reference");
  return std::sqrt(err / ref);
}

double divergence_error(const Discretization& d, const Vector& fine_load) {
  const Mesh& fm = *d.fine_mesh;
  if (fine_load.size() != fm.num_triangles()) {
    throw InvalidArgument("fine load must hold one value per fine cell");
  }
  const Mesh& cm = *d.coarse_mesh;
  Vector coarse = Vector::Zero(cm.num_triangles());
  for (int t = 0; t < fm.num_triangles(); ++t) coarse[d.map.coarse_of_fine[t]] += fine_load[t];
  double s = 0.0;
  for (int t = 0; t < fm.num_triangles(); ++t) {
    const int T = d.map.coarse_of_fine[t];
    const double diff = fine_load[t] / fm.area(t) - coarse[T] / cm.area(T);
    s += diff * diff * fm.area(t);
  }
  return std::sqrt(s);
}

double divergence_distance(const Discretization& d, const Vector& u1, const Vector& u2) {
  const Vector div = d.fine_div * (u1 - u2);
  double s = 0.0;
  for (int t = 0; t < d.fine_mesh->num_triangles(); ++t) s += div[t] * div[t] / d.fine_mesh->area(t);
  return std::sqrt(s);
}

std::vector<double> eoc(const std::vector<double>& errors, const std::vector<double>& hs) {
  if (errors.size() != hs.size() || errors.size() < 2) {
    throw InvalidArgument("eoc needs two equally long lists with at least two entries");
  }
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!(errors[i] > 0) || !(hs[i] > 0)) throw InvalidArgument("eoc needs positive entries");
  }
  std::vector<double> out;
  for (std::size_t i = 0; i + 1 < errors.size(); ++i) {
    out.push_back(std::log(errors[i] / errors[i + 1]) / std::log(hs[i] / hs[i + 1]));
  }
  return out;
}

LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw InvalidArgument("line fit needs two equally long lists with at least two entries");
  }
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0)) throw InvalidArgument("line fit needs distinct abscissae");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r_squared = syy > 0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return fit;
}

LinearFit fit_order(const std::vector<double>& errors, const std::vector<double>& hs) {
  if (errors.size() != hs.size()) throw InvalidArgument("lists differ in length");
  std::vector<double> x, y;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!(errors[i] > 0) || !(hs[i] > 0)) throw InvalidArgument("order fit needs positive entries");
    x.push_back(std::log(hs[i]));
    y.push_back(std::log(errors[i]));
  }
  return fit_line(x, y);
}

std::vector<double> cell_energy(const Discretization& d, const Vector& u) {
  const Mesh& fm = *d.fine_mesh;
  if (u.size() != d.fine.num_dofs()) throw InvalidArgument("field does not match the fine space");
  std::vector<double> out(fm.num_triangles());
  for (int t = 0; t < fm.num_triangles(); ++t) {
    Eigen::Vector3d loc = Eigen::Vector3d::Zero();
    for (int i = 0; i < 3; ++i) {
      const int dof = d.fine.dof(t, i);
      if (dof >= 0) loc[i] = d.fine.sign(t, i) * u[dof];
    }
    out[t] = loc.dot(rt0::local_mass(fm, t) * loc) / d.coeff[t];
  }
  return out;
}

std::vector<double> corrector_tail(const Discretization& d, const Vector& corrector, int T,
                                   const std::vector<int>& layers) {
  const std::vector<double> energy = cell_energy(d, corrector);
  std::vector<double> out;
  for (int m : layers) {
    const ElementSet patch = element_patch(*d.coarse_mesh, T, m);
    double s = 0.0;
    for (int t = 0; t < d.fine_mesh->num_triangles(); ++t) {
      if (!patch.contains(d.map.coarse_of_fine[t])) s += energy[t];
    }
    out.push_back(std::sqrt(s));
  }
  return out;
}

double infsup_estimate(const SparseMatrix& b, const SparseMatrix& velocity_norm,
                       const SparseMatrix& pressure_mass) {
  const auto np = b.rows();
  if (np > 4000 || b.cols() > 20000) {
    throw UnsupportedFeature("inf-sup estimate is limited to small instances");
  }
  if (velocity_norm.rows() != b.cols() || pressure_mass.rows() != np) {
    throw InvalidArgument("norm matrices do not match the divergence matrix");
  }
  // Schur complement S = B M_v^{-1} B^T; generalized eigenvalues against M_q.
  const SparseLU lu(velocity_norm, "velocity norm");
  const DenseMatrix bt = DenseMatrix(b.transpose());
  const DenseMatrix s = DenseMatrix(b) * lu.solve(bt);
  const DenseMatrix sym = 0.5 * (s + s.transpose());
  Eigen::GeneralizedSelfAdjointEigenSolver<DenseMatrix> eig(sym, DenseMatrix(pressure_mass));
  const Vector& ev = eig.eigenvalues();
  // The constants form the kernel of B^T; skip that single mode.
  if (ev.size() < 2) throw InvalidArgument("need at least two pressure dofs");
  return std::sqrt(std::max(0.0, ev[1]));
}

SparseMatrix hdiv_norm_matrix(const RTSpace& space) {
  const Mesh& mesh = space.mesh();
  const PressureSpace q(space.mesh_ptr());
  const SparseMatrix mass = assemble_weighted_mass(space, CoefficientField::constant(mesh, 1.0));
  const SparseMatrix b = assemble_div_matrix(space, q);
  Vector inv_area(mesh.num_triangles());
  for (int t = 0; t < mesh.num_triangles(); ++t) inv_area[t] = 1.0 / mesh.area(t);
  const SparseMatrix div = SparseMatrix(b.transpose()) * inv_area.asDiagonal() * b;
  return mass + div;
}

const char* results_header() {
  return "experiment,H,h,m,ell,err_u_energy,err_p_l2,err_div,runtime_s";
}

std::string format_row(const ErrorReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%s,%.12e,%.12e,%d,%d,%.12e,%.12e,%.12e,%.3f",
                r.experiment.c_str(), r.H, r.h, r.m, r.ell, r.err_u_energy, r.err_p_l2,
                r.err_div, r.runtime_s);
  return buf;
}

}  // namespace rtlod
