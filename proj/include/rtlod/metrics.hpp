#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "rtlod/corrector.hpp"
#include "rtlod/types.hpp"

namespace rtlod {

/// sqrt((u1 - u2)^T A (u1 - u2)) for the weighted mass matrix A.
double energy_error(const Vector& u1, const Vector& u2, const SparseMatrix& mass);
/// Divides by the energy norm of u2; throws InvalidArgument if it is zero.
double relative_energy_error(const Vector& u1, const Vector& u2, const SparseMatrix& mass);
double energy_norm(const Vector& u, const SparseMatrix& mass);

/// Relative L2 distance between a fine pressure and a coarse one (lifted by
/// parent value), relative to the fine pressure.
double relative_pressure_error(const Discretization& disc, const Vector& fine_pressure,
                               const Vector& coarse_pressure);

/// L2 norm of f - P_H f on the fine mesh; `fine_load` holds cell integrals.
double divergence_error(const Discretization& disc, const Vector& fine_load);

/// L2 norm of div(u1 - u2) for fine fields.
double divergence_distance(const Discretization& disc, const Vector& u1, const Vector& u2);

/// Pairwise orders log(e_i / e_{i+1}) / log(H_i / H_{i+1}).
std::vector<double> eoc(const std::vector<double>& errors, const std::vector<double>& hs);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};
/// Least-squares line through (x_i, y_i).
LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y);
/// Least-squares slope of log(error) against log(H).
LinearFit fit_order(const std::vector<double>& errors, const std::vector<double>& hs);

/// Energy norm of a fine field restricted to fine cells outside N^m(T),
/// one entry per m in `layers`.
std::vector<double> corrector_tail(const Discretization& disc, const Vector& corrector, int T,
                                   const std::vector<int>& layers);

/// Energy norm per fine cell of a fine field (squared contributions).
std::vector<double> cell_energy(const Discretization& disc, const Vector& u);

/// inf over zero-mean q of sup over v of (B v, q) / (|v|_V |q|_Q) for the
/// norm matrices of the two spaces. Dense; throws UnsupportedFeature above
/// 4000 pressure dofs.
double infsup_estimate(const SparseMatrix& b, const SparseMatrix& velocity_norm,
                       const SparseMatrix& pressure_mass);

/// H(div) norm matrix of RT0 (unit coefficient) on a mesh.
SparseMatrix hdiv_norm_matrix(const RTSpace& space);

struct ErrorReport {
  std::string experiment;
  double H = 0.0;
  double h = 0.0;
  int m = 0;
  int ell = -1;  // -1 without source correction
  double err_u_energy = 0.0;
  double err_p_l2 = 0.0;
  double err_div = 0.0;
  double runtime_s = 0.0;
};

/// Column header of the results file.
const char* results_header();
/// One CSV line (no newline) with %.12e numbers.
std::string format_row(const ErrorReport& report);

}  // namespace rtlod
