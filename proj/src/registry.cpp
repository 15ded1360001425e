#include "feinn/registry.hpp"

#include "feinn/forward.hpp"

#include <cmath>

namespace feinn {

namespace {

// ---------------------------------------------------------------------------
// Convection-diffusion-reaction with a smooth oscillatory solution on the
// unit square; Dirichlet left/right, Neumann top/bottom. Closed-form source
// and flux derived symbolically offline from the exact solution.
// ---------------------------------------------------------------------------
namespace cdr_smooth {

double u(double x, double y) {
  return std::sin(3.2 * x * (x - y)) * std::cos(x + 4.3 * y) + std::sin(4.6 * (x + 2 * y)) * std::cos(2.6 * (y - 2 * x));
}

double ux(double x, double y) {
  return (6.4 * x - 3.2 * y) * std::cos(3.2 * x * (x - y)) * std::cos(x + 4.3 * y) -
         std::sin(3.2 * x * (x - y)) * std::sin(x + 4.3 * y) -
         5.2 * std::sin(4.6 * x + 9.2 * y) * std::sin(5.2 * x - 2.6 * y) +
         4.6 * std::cos(4.6 * x + 9.2 * y) * std::cos(5.2 * x - 2.6 * y);
}

double uy(double x, double y) {
  return -3.2 * x * std::cos(3.2 * x * (x - y)) * std::cos(x + 4.3 * y) -
         4.3 * std::sin(3.2 * x * (x - y)) * std::sin(x + 4.3 * y) +
         2.6 * std::sin(4.6 * x + 9.2 * y) * std::sin(5.2 * x - 2.6 * y) +
         9.2 * std::cos(4.6 * x + 9.2 * y) * std::cos(5.2 * x - 2.6 * y);
}

double uxx(double x, double y) {
  const double a = 3.2 * x * (x - y), b = x + 4.3 * y, c = 4.6 * x + 9.2 * y, d = 5.2 * x - 2.6 * y;
  const double w = 6.4 * x - 3.2 * y;
  return -w * w * std::sin(a) * std::cos(b) - 2.0 * w * std::sin(b) * std::cos(a) - std::sin(a) * std::cos(b) -
         48.2 * std::sin(c) * std::cos(d) - 47.84 * std::sin(d) * std::cos(c) + 6.4 * std::cos(a) * std::cos(b);
}

double uyy(double x, double y) {
  const double a = 3.2 * x * (x - y), b = x + 4.3 * y, c = 4.6 * x + 9.2 * y, d = 5.2 * x - 2.6 * y;
  return -10.24 * x * x * std::sin(a) * std::cos(b) + 27.52 * x * std::sin(b) * std::cos(a) -
         18.49 * std::sin(a) * std::cos(b) - 91.4 * std::sin(c) * std::cos(d) + 47.84 * std::sin(d) * std::cos(c);
}

double kappa(double x, double y) { return 2.0 + std::sin(x + 2.0 * y); }
Point beta(double x, double y) { return {std::sqrt(x - y * y + 5.0), std::sqrt(y - x * x + 5.0)}; }
double sigma(double x, double y) { return std::exp(x / 2.0 - y / 3.0) + 2.0; }

double source(double x, double y) {
  const double kx = std::cos(x + 2.0 * y), ky = 2.0 * std::cos(x + 2.0 * y);
  const Point b = beta(x, y);
  return -(kx * ux(x, y) + ky * uy(x, y)) - kappa(x, y) * (uxx(x, y) + uyy(x, y)) + b[0] * ux(x, y) +
         b[1] * uy(x, y) + sigma(x, y) * u(x, y);
}

// Outward flux kappa n . grad u on the horizontal sides.
double eta(double x, double y) {
  return y > 0.5 ? kappa(x, y) * uy(x, y) : -kappa(x, y) * uy(x, y);
}

} // namespace cdr_smooth

// ---------------------------------------------------------------------------
// Singular corner solution r^{2/3} sin((2/3)(theta + pi/2)); harmonic, so the
// source reduces to the convection and reaction terms.
// ---------------------------------------------------------------------------
namespace singular {

double psi(double x, double y) { return (2.0 / 3.0) * std::atan2(y, x) + M_PI / 3.0; }

double u(double x, double y) {
  const double r2 = x * x + y * y;
  if (r2 == 0.0) return 0.0;
  return std::cbrt(r2) * std::sin(psi(x, y));
}

double ux(double x, double y) {
  const double r2 = x * x + y * y;
  if (r2 == 0.0) return 0.0;
  return (2.0 / 3.0) * (x * std::sin(psi(x, y)) - y * std::cos(psi(x, y))) / std::pow(r2, 2.0 / 3.0);
}

double uy(double x, double y) {
  const double r2 = x * x + y * y;
  if (r2 == 0.0) return 0.0;
  return (2.0 / 3.0) * (x * std::cos(psi(x, y)) + y * std::sin(psi(x, y))) / std::pow(r2, 2.0 / 3.0);
}

} // namespace singular

// ---------------------------------------------------------------------------
// Smooth Poisson benchmark used with imported meshes.
// ---------------------------------------------------------------------------
namespace imported {

double u(double x, double y) { return std::exp(x) * (x * x * std::sin(y) + y * y); }
double ux(double x, double y) { return std::exp(x) * (x * x * std::sin(y) + 2.0 * x * std::sin(y) + y * y); }
double uy(double x, double y) { return std::exp(x) * (x * x * std::cos(y) + 2.0 * y); }
double kappa(double x, double y) { return 2.0 + std::sin(x * y); }

double source(double x, double y) {
  const double uxx = std::exp(x) * (x * x * std::sin(y) + 4.0 * x * std::sin(y) + y * y + 2.0 * std::sin(y));
  const double uyy = -std::exp(x) * (x * x * std::sin(y) - 2.0);
  const double kx = y * std::cos(x * y), ky = x * std::cos(x * y);
  return -(kx * ux(x, y) + ky * uy(x, y)) - kappa(x, y) * (uxx + uyy);
}

} // namespace imported

// ---------------------------------------------------------------------------
// Inverse benchmarks: sin(pi x) sin(pi y) state with two diffusion fields.
// ---------------------------------------------------------------------------
namespace inv {

double u(double x, double y) { return std::sin(M_PI * x) * std::sin(M_PI * y); }
double ux(double x, double y) { return M_PI * std::cos(M_PI * x) * std::sin(M_PI * y); }
double uy(double x, double y) { return M_PI * std::sin(M_PI * x) * std::cos(M_PI * y); }

double kappa_wave(double x, double y) { return 1.0 + 0.5 * std::sin(2.0 * M_PI * x) * std::sin(2.0 * M_PI * y); }

double source_wave(double x, double y) {
  const double p = M_PI;
  return (1.0 / 8.0) * p * p *
         (-std::cos(p * (x - 3 * y)) + 7 * std::cos(p * (x - y)) - 9 * std::cos(p * (x + y)) -
          std::cos(p * (x + 3 * y)) + 3 * std::cos(p * (3 * x - 3 * y)) - std::cos(p * (3 * x - y)) -
          std::cos(p * (3 * x + y)) + 3 * std::cos(p * (3 * x + 3 * y)));
}

double kappa_bump(double x, double y) {
  return 1.0 / (1.0 + x * x + y * y + (x - 1.0) * (x - 1.0) + (y - 1.0) * (y - 1.0));
}

double source_bump(double x, double y) {
  const double p = M_PI;
  const double q = 1.0 + x * x + y * y + (x - 1.0) * (x - 1.0) + (y - 1.0) * (y - 1.0);
  return 2.0 * p *
         ((2 * x - 1) * std::sin(p * y) * std::cos(p * x) + (2 * y - 1) * std::sin(p * x) * std::cos(p * y) +
          p * q * std::sin(p * x) * std::sin(p * y)) /
         (q * q);
}

} // namespace inv

RegisteredProblem make_cdr_smooth() {
  RegisteredProblem r;
  r.id = "cdr_smooth";
  r.kind = ProblemClass::Forward;
  r.problem.kappa = cdr_smooth::kappa;
  r.problem.beta = cdr_smooth::beta;
  r.problem.sigma = cdr_smooth::sigma;
  r.problem.source = cdr_smooth::source;
  r.problem.dirichlet = cdr_smooth::u;
  r.problem.neumann = cdr_smooth::eta;
  r.problem.dirichlet_tags = {"left", "right"};
  r.problem.neumann_tags = {"bottom", "top"};
  r.exact_u = cdr_smooth::u;
  r.exact_grad_u = [](double x, double y) { return Point{cdr_smooth::ux(x, y), cdr_smooth::uy(x, y)}; };
  r.distance = [](double x, double) { return x * (1.0 - x); };
  return r;
}

RegisteredProblem make_cdr_singular() {
  RegisteredProblem r;
  r.id = "cdr_singular";
  r.kind = ProblemClass::Forward;
  r.problem.kappa = [](double, double) { return 1.0; };
  r.problem.beta = [](double, double) { return Point{2.0, 3.0}; };
  r.problem.sigma = [](double, double) { return 4.0; };
  r.problem.source = [](double x, double y) {
    return 2.0 * singular::ux(x, y) + 3.0 * singular::uy(x, y) + 4.0 * singular::u(x, y);
  };
  r.problem.dirichlet = singular::u;
  r.problem.neumann = [](double x, double y) { return y > 0.5 ? singular::uy(x, y) : -singular::uy(x, y); };
  r.problem.dirichlet_tags = {"left", "right"};
  r.problem.neumann_tags = {"bottom", "top"};
  r.exact_u = singular::u;
  r.exact_grad_u = [](double x, double y) { return Point{singular::ux(x, y), singular::uy(x, y)}; };
  r.distance = [](double x, double) { return x * (1.0 - x); };
  // The corner singularity at the origin defeats fixed-order quadrature;
  // consistency is checked on a box away from it.
  r.verification_box = {{{0.25, 0.25}, {1.0, 1.0}}};
  return r;
}

RegisteredProblem make_poisson_singular() {
  RegisteredProblem r;
  r.id = "poisson_singular";
  r.kind = ProblemClass::Forward;
  r.problem.kappa = [](double, double) { return 1.0; };
  r.problem.source = [](double, double) { return 0.0; }; // the solution is harmonic
  r.problem.dirichlet = singular::u;
  r.problem.dirichlet_tags = {"left", "right", "bottom", "top"};
  r.exact_u = singular::u;
  r.exact_grad_u = [](double x, double y) { return Point{singular::ux(x, y), singular::uy(x, y)}; };
  r.verification_box = {{{0.25, 0.25}, {1.0, 1.0}}};
  return r;
}

RegisteredProblem make_poisson_imported() {
  RegisteredProblem r;
  r.id = "poisson_imported_mesh";
  r.kind = ProblemClass::Forward;
  r.geometry = GeometryKind::Imported;
  r.problem.kappa = imported::kappa;
  r.problem.source = imported::source;
  r.problem.dirichlet = imported::u;
  r.problem.dirichlet_tags = {"boundary"}; // rewritten to the mesh's tags on load
  r.exact_u = imported::u;
  r.exact_grad_u = [](double x, double y) { return Point{imported::ux(x, y), imported::uy(x, y)}; };
  return r;
}

RegisteredProblem make_inv_partial() {
  RegisteredProblem r;
  r.id = "inv_partial";
  r.kind = ProblemClass::Inverse;
  r.problem.kappa = inv::kappa_wave;
  r.problem.source = inv::source_wave;
  r.problem.dirichlet = inv::u;
  r.problem.neumann = [](double x, double y) { return inv::kappa_wave(x, y) * inv::ux(x, y); };
  r.problem.dirichlet_tags = {"left", "bottom", "top"};
  r.problem.neumann_tags = {"right"};
  r.exact_u = inv::u;
  r.exact_grad_u = [](double x, double y) { return Point{inv::ux(x, y), inv::uy(x, y)}; };
  r.exact_kappa = inv::kappa_wave;
  r.observation_box = {{{0.25, 0.25}, {0.75, 0.75}}};
  return r;
}

RegisteredProblem make_inv_noisy() {
  RegisteredProblem r;
  r.id = "inv_noisy";
  r.kind = ProblemClass::Inverse;
  r.problem.kappa = inv::kappa_bump;
  r.problem.source = inv::source_bump;
  r.problem.dirichlet = inv::u;
  r.problem.neumann = [](double x, double y) { return inv::kappa_bump(x, y) * inv::ux(x, y); };
  r.problem.dirichlet_tags = {"left", "bottom", "top"};
  r.problem.neumann_tags = {"right"};
  r.exact_u = inv::u;
  r.exact_grad_u = [](double x, double y) { return Point{inv::ux(x, y), inv::uy(x, y)}; };
  r.exact_kappa = inv::kappa_bump;
  r.observe_all_dofs = true;
  return r;
}

RegisteredProblem make_ihcp() {
  RegisteredProblem r;
  r.id = "ihcp";
  r.kind = ProblemClass::Conduction;
  r.geometry = GeometryKind::AnnulusSector;
  r.problem.kappa = [](double x, double y) { return std::hypot(x, y) < 0.08 ? 1.0 : 100.0; };
  r.problem.dirichlet = [](double, double) { return 200.0; };
  r.problem.neumann = [](double x, double y) {
    if (std::abs(y) < 1e-6) return 0.0;
    return -100.0 - 50.0 * std::sin(std::atan2(y, x));
  };
  r.problem.dirichlet_tags = {"inner"};
  r.problem.neumann_tags = {"outer", "flat"};
  r.exact_kappa = r.problem.kappa;
  return r;
}

} // namespace

std::vector<std::string> registry_ids() {
  return {"cdr_smooth", "cdr_singular", "poisson_singular", "poisson_imported_mesh", "inv_partial", "inv_noisy", "ihcp"};
}

RegisteredProblem problem_registry(const std::string& id) {
  if (id == "cdr_smooth") return make_cdr_smooth();
  if (id == "cdr_singular") return make_cdr_singular();
  if (id == "poisson_singular") return make_poisson_singular();
  if (id == "poisson_imported_mesh") return make_poisson_imported();
  if (id == "inv_partial") return make_inv_partial();
  if (id == "inv_noisy") return make_inv_noisy();
  if (id == "ihcp") return make_ihcp();
  throw std::invalid_argument("unknown problem id '" + id + "'");
}

IhcpInstance make_ihcp_instance(const std::array<int, 2>& counts, int observation_grid,
                                const MLPArchitecture& state_arch, std::uint64_t state_seed,
                                const MLPArchitecture& eta_arch, std::uint64_t eta_seed) {
  IhcpInstance inst;
  inst.mesh = annulus_sector_mesh({0.05, 0.11}, {0.0, M_PI}, counts, true);
  const RegisteredProblem reg = problem_registry("ihcp");

  // Forward data: direct solve with the true boundary values, observed on an
  // interior polar grid.
  const FESpacePtr trial = lagrangian_space(inst.mesh, 1, {"inner"});
  const FESpacePtr test = lagrangian_space(inst.mesh, 1, {"inner"});
  inst.truth = fem_solve(reg.problem, trial, test);

  ObservationSet obs;
  const int n = observation_grid;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double r = 0.05 + 0.06 * (j + 1.0) / (n + 1.0);
      const double t = M_PI * (i + 1.0) / (n + 1.0);
      obs.points.push_back({r * std::cos(t), r * std::sin(t)});
    }
  obs.values = measure(inst.truth, obs.points);

  inst.config = ihcp_setup(inst.mesh, obs, state_arch, state_seed, eta_arch, eta_seed);
  inst.config.truth_fe = inst.truth;
  return inst;
}

} // namespace feinn
