#pragma once

#include "feinn/fespace.hpp"
#include "feinn/problem.hpp"
#include "feinn/quadrature.hpp"
#include "feinn/sparse.hpp"

#include <optional>

namespace feinn {

enum class CoefficientId { Kappa, Beta, Sigma, Source, Neumann };

/// Weak-form operator binding (problem, trial, test) with precomputed shape
/// tables and geometry. The test space fixes the residual indexing (its
/// zero-trace DOFs); the trial space may live on an ancestor mesh of the
/// test mesh (Petrov-Galerkin), in which case trial functions are evaluated
/// through the refinement lineage at test-cell quadrature points.
///
/// Coefficients marked unknown are read from per-quadrature-point value
/// vectors instead of the analytic fields; their layouts are exposed for
/// evaluating parametrizations exactly at those points.
class WeakForm {
public:
  WeakForm(ProblemDefinition problem, FESpacePtr trial, FESpacePtr test, int quad_degree = -1);

  const FESpacePtr& trial() const { return trial_; }
  const FESpacePtr& test() const { return test_; }
  int quadrature_degree() const { return degree_; }

  void set_unknown(CoefficientId field);
  /// Restricts the unknown Neumann flux to facets carrying these tags.
  void set_unknown_neumann(const std::vector<std::string>& tags);
  bool is_unknown(CoefficientId field) const;

  /// Coordinates backing an unknown field's value vector (volume points, or
  /// boundary points of the unknown-tagged facets for Neumann). Beta stacks
  /// two components: [all x-values; all y-values].
  const std::vector<Point>& coefficient_points(CoefficientId field) const;
  Eigen::Index coefficient_size(CoefficientId field) const;
  void set_coefficient_values(CoefficientId field, const Vec& values);

  /// Residual entries l(phi_i) - a(u, phi_i) over zero-trace test DOFs;
  /// `trial_values` is the full trial DOF vector (offset folded in).
  Vec residual(const Vec& trial_values) const;

  /// w^T dr/du_free, assembled cell-by-cell (no global Jacobian).
  Vec vjp_state(const Vec& trial_values, const Vec& w) const;

  /// Gradient of w^T r with respect to an unknown coefficient's values.
  Vec vjp_coefficient(CoefficientId field, const Vec& trial_values, const Vec& w) const;

  /// a(phi_trial, phi_test) on free x free DOFs.
  SparseMatrix system_matrix() const;

private:
  struct VolumeBlock {
    int test_cell = 0;
    int trial_cell = 0;
    int qp_begin = 0;
    int qp_count = 0;
    int test_n = 0, trial_n = 0;
    int test_tab = 0, trial_tab = 0; // offsets into the vals/grads arrays
  };
  struct FacetBlock {
    int test_cell = 0;
    int tag = -1;
    bool unknown = false;
    int qp_begin = 0;
    int qp_count = 0;
    int test_n = 0;
    int tab = 0;
    int unknown_begin = -1; // flat index into the unknown-eta layout
  };
  void build_volume();
  void build_boundary();
  double coefficient_at(CoefficientId field, Eigen::Index flat, const Point& x, int component = 0) const;

  ProblemDefinition problem_;
  FESpacePtr trial_, test_;
  int degree_ = 2;
  bool same_space_ = false;

  std::vector<VolumeBlock> cells_;
  std::vector<FacetBlock> facets_;
  // Flattened per-(cell, qp) integration data.
  std::vector<double> wdet_;
  std::vector<Point> phys_;
  std::vector<double> test_vals_, trial_vals_;
  std::vector<Point> test_grads_, trial_grads_;

  std::vector<double> facet_w_;
  std::vector<Point> facet_phys_;
  std::vector<double> facet_test_vals_;
  std::vector<int> unknown_neumann_tagids_;

  // Cached analytic coefficient values / unknown-value vectors per flat qp.
  struct FieldSlot {
    bool unknown = false;
    Vec values; // cached analytic or externally supplied
    std::vector<Point> points;
  };
  FieldSlot kappa_, beta_, sigma_, source_, neumann_;
  Vec neumann_known_; // analytic flux cache at every boundary point
  FieldSlot& slot(CoefficientId f);
  const FieldSlot& slot(CoefficientId f) const;
};

struct ErrorNorms {
  double l2 = 0.0;
  double h1 = 0.0; // full norm: sqrt(l2^2 + seminorm^2)
};

/// Oversampled-quadrature errors of an FE function against an exact solution.
ErrorNorms error_norms(const ScalarField& exact, const VectorField& exact_grad, const FEFunction& candidate,
                       int quad_degree);

/// Same, for a network evaluated pointwise with its analytic input gradient.
ErrorNorms error_norms_nn(const ScalarField& exact, const VectorField& exact_grad, const MLP& net, const Mesh& mesh,
                          int quad_degree);

/// L2/H1 norms of an exact field (for relative errors).
ErrorNorms function_norms(const ScalarField& f, const VectorField& grad, const Mesh& mesh, int quad_degree);

/// L2/H1 norms of an FE function itself.
ErrorNorms fe_function_norms(const FEFunction& u, int quad_degree);

enum class MatrixKind { SystemA, Mass, RieszH1 };

/// Mass (trial == test required) and H1-Riesz matrices restrict to zero-trace
/// DOFs; SystemA routes through WeakForm.
SparseMatrix assemble_matrix(MatrixKind kind, const FESpacePtr& trial, const FESpacePtr& test,
                             const ProblemDefinition& problem, int quad_degree = -1);

/// One-off residual of `u` (full DOF vector, offset folded in) against the
/// zero-trace test space.
Vec assemble_residual(const ProblemDefinition& problem, const FEFunction& u, const FESpacePtr& test,
                      int quad_degree = -1);

/// Residual of an analytic candidate (value and gradient evaluated directly
/// at quadrature points): near zero exactly when the candidate solves the
/// problem, up to quadrature error. The manufactured-solution check.
Vec assemble_residual_field(const ProblemDefinition& problem, const ScalarField& value, const VectorField& grad,
                            const FESpacePtr& test, int quad_degree);

} // namespace feinn
