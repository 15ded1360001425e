#pragma once

#include "feinn/assembly.hpp"
#include "feinn/bfgs.hpp"
#include "feinn/fespace.hpp"
#include "feinn/neural.hpp"
#include "feinn/problem.hpp"

#include <cstdint>
#include <optional>

namespace feinn {

/// Observation data d at physical points; noise metadata kept for provenance.
struct ObservationSet {
  std::vector<Point> points;
  Vec values;
  double noise_sigma = 0.0;
  std::uint64_t noise_seed = 0;
};

/// Locates `point` in a cell of `mesh` (reference-coordinate tolerance 1e-10).
std::pair<int, Point> locate_point(const Mesh& mesh, const Point& point);

/// Linear FE evaluation at fixed points with cached cell/shape tables;
/// apply() is D u, vjp() is D^T w over the full DOF vector.
class MeasurementOperator {
public:
  MeasurementOperator(FESpacePtr space, std::vector<Point> points);
  Vec apply(const Vec& full_values) const;
  Vec vjp(const Vec& w) const;
  Eigen::Index size() const { return static_cast<Eigen::Index>(points_.size()); }

private:
  FESpacePtr space_;
  std::vector<Point> points_;
  std::vector<int> cells_;
  std::vector<std::vector<double>> tables_; // shape values per point
};

Vec measure(const FEFunction& u, const std::vector<Point>& points);

/// values + independent N(0, sigma^2) draws, bit-reproducible per seed.
Vec add_noise(const Vec& values, double sigma, std::uint64_t seed);

enum class UnknownTarget : std::uint8_t { Kappa, EtaNeumann, DirichletTrace };

/// One unknown model parameter: a field network (Kappa over the volume,
/// EtaNeumann over tagged boundary facets) or the Dirichlet trace read off
/// the state (no network of its own).
struct UnknownFieldSpec {
  UnknownTarget target = UnknownTarget::Kappa;
  MLPArchitecture arch;
  std::uint64_t seed = 0;
  std::vector<std::string> tags; // EtaNeumann: unknown flux tags; DirichletTrace: unconstrained tags
};

/// Step plan [n1, n2, k x n3] with strictly increasing penalties (one alpha
/// per coupled sub-step).
struct TrainingPlan {
  int n1 = 0, n2 = 0, n3 = 0;
  std::vector<double> alphas;

  void check() const {
    if (n1 < 0 || n2 < 0 || n3 < 0) throw std::invalid_argument("iteration counts must be >= 0");
    for (std::size_t i = 1; i < alphas.size(); ++i)
      if (!(alphas[i] > alphas[i - 1])) throw std::invalid_argument("penalty coefficients must be strictly increasing");
  }
};

struct InverseConfig {
  ProblemDefinition problem; // known data; fields replaced by unknowns are ignored
  MeshPtr mesh;
  int order = 1;
  MLPArchitecture state_arch;
  std::uint64_t state_seed = 0;
  std::vector<UnknownFieldSpec> unknowns;
  ObservationSet observations;
  TrainingPlan plan;
  double grad_tol = 1e-12;
  // Reporting (optional): analytic truths, or an FE truth on the same space.
  ScalarField exact_u;
  VectorField exact_grad_u;
  ScalarField exact_kappa;
  ScalarField exact_eta;
  std::optional<FEFunction> truth_fe;
  int history_stride = 1;
};

/// Combined loss |d - D u(theta_u)| + alpha |r(u, lambda)|_l1 with unknown
/// fields entering the residual through their quadrature-point values.
class InverseModel {
public:
  explicit InverseModel(const InverseConfig& config);

  Eigen::Index state_size() const { return state_arch().param_count(); }
  Eigen::Index field_size() const { return field_size_; }
  const MLPArchitecture& state_arch() const { return config_.state_arch; }

  double loss(const Vec& theta_u, const Vec& theta_fields, double alpha) const;
  std::pair<Vec, Vec> grad(const Vec& theta_u, const Vec& theta_fields, double alpha) const;
  double loss_and_grad(const Vec& theta_u, const Vec& theta_fields, double alpha, bool with_misfit,
                       bool with_residual, Vec* grad_u, Vec* grad_fields, double* misfit_out = nullptr,
                       double* residual_out = nullptr) const;

  FEFunction state_function(const Vec& theta_u) const;
  const WeakForm& weak_form() const { return *wf_; }
  const FESpacePtr& trial() const { return trial_; }
  const FESpacePtr& test() const { return test_; }
  const std::vector<UnknownFieldSpec>& unknowns() const { return config_.unknowns; }
  Vec field_theta_slice(const Vec& theta_fields, std::size_t which) const;
  /// Field-network values at the weak form's quadrature points.
  Vec field_values(std::size_t which, const Vec& theta_fields) const;

private:
  void apply_fields(const Vec& theta_fields) const;

  InverseConfig config_;
  FESpacePtr trial_, test_;
  FEFunction offset_;
  std::unique_ptr<WeakForm> wf_;
  std::unique_ptr<MeasurementOperator> D_;
  Mat state_points_;
  std::vector<Mat> field_points_;
  std::vector<CoefficientId> field_ids_;
  std::vector<Eigen::Index> field_offsets_; // into the concatenated field theta
  Eigen::Index field_size_ = 0;
};

struct InverseReportRow {
  int iter = 0;
  int step = 1;
  double alpha = 0.0;
  double loss = 0.0;
  double misfit = 0.0;
  double residual_l1 = 0.0;
  double eps_l2_u = std::numeric_limits<double>::quiet_NaN();
  double eps_h1_u = std::numeric_limits<double>::quiet_NaN();
  double eps_l2_field = std::numeric_limits<double>::quiet_NaN();
};

struct InverseResult {
  MLP state;
  std::vector<MLP> fields;
  std::vector<std::vector<Point>> field_points; // quadrature layout per field
  std::vector<Vec> field_final_values;
  FEFunction state_solution;
  std::vector<InverseReportRow> report;
  double eps_l2_u = std::numeric_limits<double>::quiet_NaN();
  double eps_h1_u = std::numeric_limits<double>::quiet_NaN();
  double eps_l2_u_nn = std::numeric_limits<double>::quiet_NaN();
  double eps_l2_field = std::numeric_limits<double>::quiet_NaN();
  std::vector<BfgsStatus> step_status;
};

/// Step 1 fits the state to the observations, Step 2 initializes the field
/// networks on the residual with the state frozen, Step 3 runs the coupled
/// minimization over increasing penalties with a fresh optimizer per
/// sub-step.
InverseResult train_inverse(const InverseConfig& config);

/// Two-layer half-tube conduction setup: piecewise diffusion (1 inside
/// r = 0.08, 100 outside), unknown Dirichlet trace on the inner boundary,
/// unknown Neumann flux network on the outer one, zero flux on the flats.
InverseConfig ihcp_setup(const MeshPtr& mesh, const ObservationSet& observations, const MLPArchitecture& state_arch,
                         std::uint64_t state_seed, const MLPArchitecture& eta_arch, std::uint64_t eta_seed);

} // namespace feinn
