#pragma once

#include "feinn/types.hpp"

#include <memory>
#include <vector>

#include <Eigen/SparseCore>

namespace feinn {

/// Compressed-row matrix (sorted, unique columns per row), backed by Eigen.
class SparseMatrix {
public:
  using Storage = Eigen::SparseMatrix<double, Eigen::RowMajor, int>;
  using Triplet = Eigen::Triplet<double>;

  SparseMatrix() = default;
  explicit SparseMatrix(Storage m) : m_(std::move(m)) { m_.makeCompressed(); }

  static SparseMatrix from_triplets(int rows, int cols, const std::vector<Triplet>& triplets);

  int rows() const { return static_cast<int>(m_.rows()); }
  int cols() const { return static_cast<int>(m_.cols()); }
  const int* row_offsets() const { return m_.outerIndexPtr(); }
  const int* col_indices() const { return m_.innerIndexPtr(); }
  const double* values() const { return m_.valuePtr(); }
  Eigen::Index nonzeros() const { return m_.nonZeros(); }

  const Storage& eigen() const { return m_; }
  Storage& eigen() { return m_; }

  Vec operator*(const Vec& x) const { return m_ * x; }
  Vec transpose_times(const Vec& x) const { return m_.transpose() * x; }
  SparseMatrix transposed() const { return SparseMatrix(Storage(m_.transpose())); }
  Vec diagonal() const { return m_.diagonal(); }

private:
  Storage m_;
};

/// Reusable direct factorization (LU, or Cholesky under spd_hint); solves
/// never refactor. Throws SingularMatrixError on singular pivots.
class Factorization {
public:
  Vec solve(const Vec& b) const;
  Vec solve_transpose(const Vec& b) const;
  long solves_performed() const;

  struct Impl;
  explicit Factorization(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}

private:
  std::shared_ptr<Impl> impl_;
};

Factorization factorize(const SparseMatrix& A, bool spd_hint);

/// Global count of factorizations performed (reuse diagnostics for tests).
long factorization_count();

} // namespace feinn
