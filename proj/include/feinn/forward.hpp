#pragma once

#include "feinn/assembly.hpp"
#include "feinn/bfgs.hpp"
#include "feinn/fespace.hpp"
#include "feinn/gmg.hpp"
#include "feinn/neural.hpp"
#include "feinn/problem.hpp"

#include <cstdint>
#include <memory>
#include <optional>

namespace feinn {

enum class VectorNorm : std::uint8_t { L1, L2 };
enum class PreconditionerKind : std::uint8_t { None, Mass, ExactLinear, ExactTrial, Gmg };
enum class OuterNorm : std::uint8_t { Euclidean, H1 };

/// Residual norm selection: z = B^{-1} r, then |z|_l1, |z|_l2, or the H1 norm
/// sqrt(z^T A_riesz z) of the represented FE function.
struct NormSpec {
  VectorNorm vector_norm = VectorNorm::L2;
  PreconditionerKind preconditioner = PreconditionerKind::None;
  int gmg_cycles = 3;
  OuterNorm outer_norm = OuterNorm::Euclidean;

  void check() const {
    if (outer_norm == OuterNorm::H1 && preconditioner == PreconditionerKind::None)
      throw std::invalid_argument("the H1 outer norm requires a preconditioner producing FE coefficients");
  }
};

enum class SolverVariant : std::uint8_t { Feinn, Ivpinn, FemOnly };

struct ForwardConfig {
  ProblemDefinition problem;
  MeshPtr mesh;
  std::vector<MeshPtr> mesh_chain; // coarse ancestors of `mesh`, for multigrid depth
  int order = 1;                   // trial order k_U
  bool petrov_galerkin = true;     // order-1 test space on the factor-k refinement
  NormSpec norm;
  MLPArchitecture arch;
  std::uint64_t seed = 0;
  OffsetMode offset_mode = OffsetMode::ZeroExtension;
  SolverVariant variant = SolverVariant::Feinn;
  ScalarField distance; // Phi for the product-form variant; zero on Dirichlet nodes
  int max_iters = 1000;
  double grad_tol = 1e-12;
  Eigen::Index dense_bfgs_limit = 10000; // switch to L-BFGS(20) above this
  // Reporting (all optional).
  ScalarField exact;
  VectorField exact_grad;
  int history_stride = 1;
  bool log_nn_errors = true;
};

/// Direct solve of the discrete problem on (trial, test); the Dirichlet
/// offset (zero extension) is folded into the returned function.
FEFunction fem_solve(const ProblemDefinition& problem, const FESpacePtr& trial, const FESpacePtr& test,
                     int quad_degree = -1);

/// Prepared forward operators: residual r(theta) = b - A u~(theta), the
/// selected preconditioner, and the network evaluation set (free-DOF nodes).
/// loss/grad close over this state.
class ForwardModel {
public:
  explicit ForwardModel(const ForwardConfig& config);

  double loss(const Vec& theta) const;
  Vec grad(const Vec& theta) const;
  double loss_and_grad(const Vec& theta, Vec& grad_out) const;

  /// Offset + zero-trace interpolation of the network (the trained solution).
  FEFunction interpolated(const Vec& theta) const;
  const FEFunction& fem_solution() const; // cached direct solve on the same spaces

  const FESpacePtr& trial() const { return trial_; }
  const FESpacePtr& test() const { return test_; }
  const MLPArchitecture& arch() const { return config_.arch; }
  const ForwardConfig& config() const { return config_; }
  Vec residual_of(const Vec& theta) const;

private:
  Vec tilde_values(const Vec& theta) const; // free-DOF coefficients of the interpolated net
  Vec precondition(const Vec& r) const;
  Vec precondition_transpose(const Vec& z) const;

  ForwardConfig config_;
  FESpacePtr trial_, test_;
  FEFunction offset_;
  SparseMatrix A_;
  Vec b_;
  Mat eval_points_;    // free-DOF nodal coordinates
  Vec node_factor_;    // 1, or Phi at free nodes for the product variant
  std::optional<Factorization> pre_fact_;
  bool pre_self_adjoint_ = true;
  std::optional<GMGHierarchy> gmg_;
  std::optional<SparseMatrix> riesz_;
  mutable std::optional<FEFunction> fem_;
};

struct HistoryRow {
  int iter = 0;
  double loss = 0.0;
  double l2_interp = std::numeric_limits<double>::quiet_NaN();
  double h1_interp = std::numeric_limits<double>::quiet_NaN();
  double l2_nn = std::numeric_limits<double>::quiet_NaN();
  double h1_nn = std::numeric_limits<double>::quiet_NaN();
};

struct ForwardResult {
  MLP net;
  FEFunction solution;
  BfgsResult opt;
  std::vector<HistoryRow> history;
  ErrorNorms errors_interp, errors_nn, errors_fem; // vs exact, when provided
  double rel_distance_to_fem = std::numeric_limits<double>::quiet_NaN();
};

/// Trains the network against the residual-norm loss and reports errors per
/// iteration (interpolated and raw network) when the exact solution is known.
ForwardResult train_forward(const ForwardConfig& config);

} // namespace feinn
