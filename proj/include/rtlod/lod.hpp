#pragma once

#include <optional>

#include "rtlod/corrector.hpp"
#include "rtlod/types.hpp"

namespace rtlod {

/// Checks |sum f| <= tol max(sum |f|, 1) (CompatibilityError otherwise) and
/// removes the area-weighted mean so the discrete system is consistent.
/// Both solvers apply this to their load.
Vector compatible_load(const Vector& load, const std::vector<double>& areas,
                       double tol = 1e-8);

struct ReferenceSolution {
  Vector velocity;  // fine RT dofs
  Vector pressure;  // fine cell values, zero mean
  double relative_residual = 0.0;
};

/// Fine mixed problem a(u, v) + b(v, p) = 0, b(u, q) = -(f, q) with zero-mean
/// pressure. `load` holds the integrals of f over the cells. Throws
/// CompatibilityError if the load does not integrate to zero.
ReferenceSolution solve_reference(const RTSpace& velocity, const PressureSpace& pressure,
                                  const CoefficientField& coeff, const Vector& load);
ReferenceSolution solve_reference(const Discretization& disc, const Vector& fine_load);

struct MultiscaleSolution {
  /// Coefficients of u in the basis (E - Q) phi_i.
  Vector coarse_coefficients;
  Vector coarse_pressure;  // coarse cell values, zero mean
  Vector fine_velocity;    // (E - Q) c plus the source correction
  int layers = 0;
  std::optional<int> source_layers;
  double H = 0.0;
  double h = 0.0;
};

/// R^T A_h R with R = E - Q, assembled coarse cell by coarse cell.
SparseMatrix multiscale_stiffness(const Discretization& disc, const CorrectorSet& correctors);

/// Fine dof vector of (E - Q) c.
Vector multiscale_velocity(const Discretization& disc, const CorrectorSet& correctors,
                           const Vector& coarse);

/// Coarse cell sums of the fine load.
Vector coarse_load(const Discretization& disc, const Vector& fine_load);

/// Solves the coarse multiscale saddle system. `source_correction` is the
/// summed source corrector (fine dofs) computed with `source_layers`.
MultiscaleSolution assemble_and_solve_lod(const Discretization& disc,
                                          const CorrectorSet& correctors,
                                          const Vector& fine_load,
                                          const Vector* source_correction = nullptr,
                                          std::optional<int> source_layers = std::nullopt);

/// Saturated patches everywhere; optionally with ideal source correction.
MultiscaleSolution ideal_mode(const Discretization& disc, const Vector& fine_load,
                              bool source_correction = false, int threads = 1);

/// Bordered zero-mean saddle solve [A B^T 0; B 0 a; 0 a^T 0].
struct SaddleSolution {
  Vector velocity;
  Vector pressure;
  double multiplier = 0.0;
  double relative_residual = 0.0;
};
SaddleSolution solve_saddle(const SparseMatrix& a, const SparseMatrix& b,
                            const std::vector<double>& cell_areas, const Vector& velocity_rhs,
                            const Vector& pressure_rhs, const std::string& context);

}  // namespace rtlod
