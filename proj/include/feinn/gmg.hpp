#pragma once

#include "feinn/assembly.hpp"
#include "feinn/fespace.hpp"
#include "feinn/sparse.hpp"

#include <optional>

namespace feinn {

/// Linear interpolation matrix from a coarse order-1 space onto the order-1
/// space on its refined mesh (full DOF indexing); rows sum to one.
SparseMatrix prolongation(const FESpacePtr& coarse, const FESpacePtr& fine);

struct GMGOptions {
  int cycles = 3;
  int pre_sweeps = 2;
  int post_sweeps = 2;
  double omega = 2.0 / 3.0; // damped Jacobi
};

/// Geometric multigrid over nested order-1 zero-trace spaces (coarse to
/// fine), with the problem's bilinear form assembled per level, damped-Jacobi
/// smoothing and a direct coarsest solve. apply() runs the configured number
/// of V-cycles from a zero initial guess; as a map r -> z it is linear, and
/// apply_transpose() is its exact adjoint (used in gradient pullbacks).
class GMGHierarchy {
public:
  GMGHierarchy(const ProblemDefinition& problem, std::vector<FESpacePtr> spaces, GMGOptions opts = {});

  Vec apply(const Vec& r) const;
  Vec apply_transpose(const Vec& r) const;
  int finest_size() const;
  int level_count() const { return static_cast<int>(levels_.size()); }

private:
  struct Level {
    SparseMatrix A;
    SparseMatrix At;
    Vec inv_diag;
    SparseMatrix P;  // free DOFs of the previous (coarser) level -> this level
    SparseMatrix Pt;
  };
  void vcycle(int level, const Vec& r, Vec& z, bool transposed) const;
  Vec run(const Vec& r, bool transposed) const;

  std::vector<Level> levels_;
  std::optional<Factorization> coarse_;
  GMGOptions opts_;
};

} // namespace feinn
