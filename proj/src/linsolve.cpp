#include "rtlod/linsolve.hpp"

#include <cmath>

#include <Eigen/LU>
#include <Eigen/SparseLU>

#include "rtlod/errors.hpp"

namespace rtlod {

struct SparseLU::Impl {
  Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu;

  template <class Rhs>
  Rhs solve(const Rhs& b) const {
    return lu.solve(b);
  }
};

SparseLU::SparseLU(const SparseMatrix& matrix, const std::string& context)
    : impl_(std::make_unique<Impl>()), rows_(static_cast<int>(matrix.rows())), context_(context) {
  if (matrix.rows() != matrix.cols()) {
    throw SolverError("non-square system" + (context.empty() ? "" : " (" + context + ")"));
  }
  SparseMatrix a = matrix;
  a.makeCompressed();
  impl_->lu.compute(a);
  if (impl_->lu.info() != Eigen::Success) {
    throw SolverError("sparse factorization failed" +
                      (context.empty() ? "" : " (" + context + ")"));
  }
}

SparseLU::~SparseLU() = default;
SparseLU::SparseLU(SparseLU&&) noexcept = default;
SparseLU& SparseLU::operator=(SparseLU&&) noexcept = default;

Vector SparseLU::solve(const Vector& rhs) const {
  Vector x = impl_->solve(rhs);
  if (!x.allFinite()) {
    throw SolverError("sparse solve produced non-finite values" +
                      (context_.empty() ? "" : " (" + context_ + ")"));
  }
  return x;
}

DenseMatrix SparseLU::solve(const DenseMatrix& rhs) const {
  DenseMatrix x = impl_->solve(rhs);
  if (!x.allFinite()) {
    throw SolverError("sparse solve produced non-finite values" +
                      (context_.empty() ? "" : " (" + context_ + ")"));
  }
  return x;
}

const char* SparseLU::backend() { return "eigen-sparselu"; }

DenseMatrix dense_solve(const DenseMatrix& matrix, const DenseMatrix& rhs,
                        const std::string& context) {
  Eigen::PartialPivLU<DenseMatrix> lu(matrix);
  // PartialPivLU does not report singularity; check the pivots instead.
  const auto& u = lu.matrixLU();
  const double scale = std::max(1.0, matrix.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < u.rows(); ++i) {
    if (!(std::abs(u(i, i)) > 1e-13 * scale)) {
      throw InternalError("singular local system (" + context + ")");
    }
  }
  return lu.solve(rhs);
}

}  // namespace rtlod
