#include "feinn/sparse.hpp"

#include <atomic>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

namespace feinn {

namespace {
std::atomic<long> g_factorizations{0};
}

SparseMatrix SparseMatrix::from_triplets(int rows, int cols, const std::vector<Triplet>& triplets) {
  Storage m(rows, cols);
  m.setFromTriplets(triplets.begin(), triplets.end());
  m.makeCompressed();
  return SparseMatrix(std::move(m));
}

struct Factorization::Impl {
  using ColMat = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
  std::unique_ptr<Eigen::SparseLU<ColMat>> lu;
  std::unique_ptr<Eigen::SimplicialLLT<ColMat>> llt;
  mutable std::atomic<long> solves{0};
};

Vec Factorization::solve(const Vec& b) const {
  impl_->solves.fetch_add(1);
  if (impl_->llt) return impl_->llt->solve(b);
  return impl_->lu->solve(b);
}

Vec Factorization::solve_transpose(const Vec& b) const {
  impl_->solves.fetch_add(1);
  if (impl_->llt) return impl_->llt->solve(b); // symmetric
  return impl_->lu->transpose().solve(b);
}

long Factorization::solves_performed() const { return impl_->solves.load(); }

Factorization factorize(const SparseMatrix& A, bool spd_hint) {
  if (A.rows() != A.cols()) throw std::invalid_argument("factorize requires a square matrix");
  g_factorizations.fetch_add(1);
  auto impl = std::make_shared<Factorization::Impl>();
  const Factorization::Impl::ColMat M = A.eigen();
  if (spd_hint) {
    impl->llt = std::make_unique<Eigen::SimplicialLLT<Factorization::Impl::ColMat>>();
    impl->llt->compute(M);
    if (impl->llt->info() != Eigen::Success)
      throw SingularMatrixError("Cholesky factorization failed (matrix not SPD?)");
  } else {
    impl->lu = std::make_unique<Eigen::SparseLU<Factorization::Impl::ColMat>>();
    impl->lu->compute(M);
    if (impl->lu->info() != Eigen::Success) throw SingularMatrixError("LU factorization hit a singular pivot");
  }
  return Factorization(std::move(impl));
}

long factorization_count() { return g_factorizations.load(); }

} // namespace feinn
