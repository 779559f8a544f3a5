#pragma once

#include <memory>
#include <string>

#include "rtlod/types.hpp"

namespace rtlod {

/// Sparse LU with partial pivoting (Eigen SparseLU, COLAMD ordering).
/// Suitable for symmetric indefinite saddle-point systems.
class SparseLU {
 public:
  /// Throws SolverError with `context` in the message if factorization fails.
  explicit SparseLU(const SparseMatrix& matrix, const std::string& context = "");
  ~SparseLU();
  SparseLU(SparseLU&&) noexcept;
  SparseLU& operator=(SparseLU&&) noexcept;

  Vector solve(const Vector& rhs) const;
  DenseMatrix solve(const DenseMatrix& rhs) const;
  int rows() const { return rows_; }

  static const char* backend();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int rows_ = 0;
  std::string context_;
};

/// Dense LU with partial pivoting; throws InternalError if the matrix is
/// numerically singular.
DenseMatrix dense_solve(const DenseMatrix& matrix, const DenseMatrix& rhs,
                        const std::string& context);

}  // namespace rtlod
