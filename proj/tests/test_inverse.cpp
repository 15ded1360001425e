#include <doctest.h>

#include "feinn/forward.hpp"
#include "feinn/inverse.hpp"
#include "feinn/registry.hpp"
#include "feinn/rng.hpp"

#include <cmath>

using namespace feinn;

TEST_SUITE_BEGIN("inverse");

namespace {

Vec random_vec(Eigen::Index n, std::uint64_t seed) {
  Rng rng(seed);
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.uniform(-1.0, 1.0);
  return v;
}

// Small 2D coefficient-identification instance with observations in a box.
InverseConfig small_instance(int n, std::uint64_t seed) {
  const RegisteredProblem reg = problem_registry("inv_partial");
  InverseConfig cfg;
  cfg.problem = reg.problem;
  cfg.mesh = cartesian_mesh({0.0, 0.0}, {1.0, 1.0}, {n, n});
  cfg.order = 1;
  cfg.state_arch.widths = {2, 10, 1};
  cfg.state_arch.activation = Activation::Softplus;
  cfg.state_seed = seed;
  UnknownFieldSpec kappa;
  kappa.target = UnknownTarget::Kappa;
  kappa.arch.widths = {2, 10, 1};
  kappa.arch.activation = Activation::Softplus;
  kappa.arch.rectifier = Rectifier::AbsPlusEps;
  kappa.seed = seed + 7;
  cfg.unknowns.push_back(kappa);

  const FESpacePtr space = lagrangian_space(cfg.mesh, 1, reg.problem.dirichlet_tags);
  const FEFunction truth = fem_solve(reg.problem, space, space);
  for (const Point& p : space->dof_coords)
    if (p[0] > 0.2 && p[0] < 0.8 && p[1] > 0.2 && p[1] < 0.8) cfg.observations.points.push_back(p);
  cfg.observations.values = measure(truth, cfg.observations.points);
  cfg.plan = {5, 5, 5, {0.1, 0.3}};
  cfg.exact_u = reg.exact_u;
  cfg.exact_grad_u = reg.exact_grad_u;
  cfg.exact_kappa = reg.exact_kappa;
  return cfg;
}

} // namespace

TEST_CASE("measurement operator") {
  const MeshPtr m = cartesian_mesh({0.0, 0.0}, {1.0, 1.0}, {4, 4});
  const FESpacePtr s = lagrangian_space(m, 2, {});
  const std::vector<Point> pts{{0.13, 0.41}, {0.5, 0.5}, {0.99, 0.01}, {0.625, 0.875}};

  SUBCASE("constants are reproduced everywhere") {
    const FEFunction c = interpolate([](double, double) { return 3.5; }, s, false);
    const Vec v = measure(c, pts);
    for (Eigen::Index i = 0; i < v.size(); ++i) CHECK(v(i) == doctest::Approx(3.5).epsilon(1e-13));
  }
  SUBCASE("nodal points return the DOF value exactly") {
    const FEFunction u = interpolate([](double x, double y) { return x * x - y; }, s, false);
    const Vec v = measure(u, {s->dof_coords[7], s->dof_coords[19]});
    CHECK(v(0) == doctest::Approx(u.values(7)).epsilon(1e-13));
    CHECK(v(1) == doctest::Approx(u.values(19)).epsilon(1e-13));
  }
  SUBCASE("linearity in the DOF vector") {
    MeasurementOperator D(s, pts);
    const Vec a = random_vec(s->dof_count(), 1);
    const Vec b = random_vec(s->dof_count(), 2);
    const Vec sum = D.apply(a + b);
    CHECK((sum - D.apply(a) - D.apply(b)).lpNorm<Eigen::Infinity>() < 1e-13);
  }
  SUBCASE("points outside the domain are rejected by name") {
    CHECK_THROWS_WITH_AS(measure(interpolate([](double, double) { return 0.0; }, s, false), {{1.5, 0.5}}),
                         doctest::Contains("1.5"), std::invalid_argument);
  }
  SUBCASE("misfit gradient mass only lands on cells with observations") {
    MeasurementOperator D(s, {{0.1, 0.1}}); // inside the first cell only
    const Vec g = D.vjp(Vec::Ones(1));
    int nonzero = 0;
    for (Eigen::Index i = 0; i < g.size(); ++i) nonzero += g(i) != 0.0;
    CHECK(nonzero <= 9); // one biquadratic cell's DOFs
  }
  SUBCASE("triangle meshes are searchable too") {
    const MeshPtr tm = annulus_sector_mesh({0.05, 0.11}, {0.0, M_PI}, {6, 6}, true);
    const FESpacePtr ts = lagrangian_space(tm, 1, {});
    const FEFunction u = interpolate([](double x, double y) { return x + 2.0 * y; }, ts, false);
    const Vec v = measure(u, {{0.0, 0.08}, {-0.06, 0.02}});
    CHECK(v(0) == doctest::Approx(0.16).epsilon(1e-10));
    CHECK(v(1) == doctest::Approx(-0.02).epsilon(2e-9));
  }
}

TEST_CASE("noise injection") {
  const Vec base = random_vec(200, 3);
  SUBCASE("zero sigma is the identity") {
    CHECK((add_noise(base, 0.0, 5) - base).lpNorm<Eigen::Infinity>() == 0.0);
  }
  SUBCASE("same seed, same draw") {
    const Vec a = add_noise(base, 0.05, 42);
    CHECK((a - add_noise(base, 0.05, 42)).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((a - add_noise(base, 0.05, 43)).lpNorm<Eigen::Infinity>() > 0.0);
  }
  SUBCASE("sample variance concentrates around sigma^2") {
    const double sigma = 0.05;
    const Vec big = add_noise(Vec::Zero(100000), sigma, 7);
    const double var = big.squaredNorm() / static_cast<double>(big.size());
    CHECK(var == doctest::Approx(sigma * sigma).epsilon(0.05));
  }
  SUBCASE("negative sigma is rejected") { CHECK_THROWS_AS(add_noise(base, -1.0, 1), std::invalid_argument); }
}

TEST_CASE("plan validation") {
  TrainingPlan good{100, 100, 100, {0.1, 0.3, 0.9}};
  CHECK_NOTHROW(good.check());
  TrainingPlan repeat{100, 100, 100, {0.1, 0.1}};
  CHECK_THROWS_AS(repeat.check(), std::invalid_argument);
  TrainingPlan decreasing{100, 100, 100, {0.3, 0.1}};
  CHECK_THROWS_AS(decreasing.check(), std::invalid_argument);
  TrainingPlan negative{-1, 0, 0, {}};
  CHECK_THROWS_AS(negative.check(), std::invalid_argument);
}

TEST_CASE("manufactured truth drives the combined loss to quadrature level") {
  // 1D instance whose exact coefficient is affine (one linear layer
  // represents it exactly) and whose state network is the ReLU emulation of
  // the direct solve: every pipeline stage is exact to machine precision.
  ProblemDefinition p;
  p.kappa = [](double x, double) { return 1.0 + x; };
  p.source = [](double, double) { return 1.0; };
  p.dirichlet = [](double, double) { return 0.0; };
  p.dirichlet_tags = {"left", "right"};
  const MeshPtr m = cartesian_mesh({0.0, 0.0}, {1.0, 0.0}, {8, 0});
  const FESpacePtr space = lagrangian_space(m, 1, p.dirichlet_tags);
  const FEFunction truth = fem_solve(p, space, space);

  InverseConfig cfg;
  cfg.problem = p;
  cfg.mesh = m;
  cfg.order = 1;
  UnknownFieldSpec kappa;
  kappa.target = UnknownTarget::Kappa;
  kappa.arch.widths = {1, 1};
  kappa.seed = 0;
  cfg.unknowns.push_back(kappa);
  for (const Point& x : space->dof_coords) cfg.observations.points.push_back(x);
  cfg.observations.values = measure(truth, cfg.observations.points);
  const MLP emulator = relu_emulator(truth);
  cfg.state_arch = emulator.arch;
  cfg.plan = {0, 0, 0, {1.0}};

  InverseModel model(cfg);
  Vec kappa_theta(2);
  kappa_theta << 1.0, 1.0; // W = 1, b = 1: exactly 1 + x
  for (double alpha : {0.0, 0.5, 2.0}) {
    const double loss = model.loss(emulator.theta, kappa_theta, alpha);
    CHECK(loss <= 1e-6 * (1.0 + alpha));
  }
  // alpha = 0 reduces to the pure data misfit.
  Vec gu, gf;
  double misfit = 0.0, resid = 0.0;
  const double l0 = model.loss_and_grad(emulator.theta, kappa_theta, 0.0, true, true, &gu, &gf, &misfit, &resid);
  CHECK(l0 == doctest::Approx(misfit));
}

TEST_CASE("gradients match central differences for both parameter blocks") {
  InverseConfig cfg = small_instance(4, 11);
  InverseModel model(cfg);
  Vec tu = glorot_init(cfg.state_arch, 1);
  Vec tf = glorot_init(cfg.unknowns[0].arch, 2);
  const double alpha = 0.3;
  auto [gu, gf] = model.grad(tu, tf, alpha);
  const double eps = 1e-6;
  Rng pick(5);
  for (int t = 0; t < 12; ++t) {
    const Eigen::Index j = static_cast<Eigen::Index>(pick.uniform() * static_cast<double>(tu.size()));
    Vec p = tu, q = tu;
    p(j) += eps;
    q(j) -= eps;
    const double fd = (model.loss(p, tf, alpha) - model.loss(q, tf, alpha)) / (2 * eps);
    CHECK(gu(j) == doctest::Approx(fd).epsilon(1e-5).scale(1.0));
  }
  for (int t = 0; t < 12; ++t) {
    const Eigen::Index j = static_cast<Eigen::Index>(pick.uniform() * static_cast<double>(tf.size()));
    Vec p = tf, q = tf;
    p(j) += eps;
    q(j) -= eps;
    const double fd = (model.loss(tu, p, alpha) - model.loss(tu, q, alpha)) / (2 * eps);
    CHECK(gf(j) == doctest::Approx(fd).epsilon(1e-5).scale(1.0));
  }
  // alpha = 0: the field block cannot influence the loss.
  auto [gu0, gf0] = model.grad(tu, tf, 0.0);
  (void)gu0;
  CHECK(gf0.lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("rectified coefficient networks stay positive at quadrature points") {
  InverseConfig cfg = small_instance(5, 21);
  InverseModel model(cfg);
  for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull}) {
    const Vec tf = glorot_init(cfg.unknowns[0].arch, seed);
    const Vec vals = model.field_values(0, tf);
    CHECK(vals.minCoeff() >= 0.01);
  }
}

TEST_CASE("step 1 alone reproduces the data at the regression fixed point") {
  // Full observations at every DOF, known coefficient, no penalty steps:
  // the misfit is a pure network regression and must reach 1e-4.
  const RegisteredProblem reg = problem_registry("inv_partial");
  InverseConfig cfg;
  cfg.problem = reg.problem;
  cfg.mesh = cartesian_mesh({0.0, 0.0}, {1.0, 1.0}, {8, 8});
  cfg.order = 1;
  cfg.state_arch.widths = {2, 30, 30, 1};
  cfg.state_arch.activation = Activation::Tanh;
  cfg.state_seed = 1;
  const FESpacePtr space = lagrangian_space(cfg.mesh, 1, reg.problem.dirichlet_tags);
  const FEFunction truth = fem_solve(reg.problem, space, space);
  for (const Point& p : space->dof_coords) cfg.observations.points.push_back(p);
  cfg.observations.values = measure(truth, cfg.observations.points);
  cfg.plan = {6000, 0, 0, {}};
  cfg.history_stride = 500;

  const InverseResult r = train_inverse(cfg);
  REQUIRE_FALSE(r.report.empty());
  CHECK(r.report.back().misfit <= 1e-4);
}

TEST_CASE("three-step training on a small instance") {
  InverseConfig cfg = small_instance(5, 31);
  cfg.plan = {40, 40, 40, {0.1, 0.3}};
  const InverseResult r = train_inverse(cfg);

  int max_step = 0;
  double last_alpha = 0.0;
  for (const InverseReportRow& row : r.report) {
    max_step = std::max(max_step, row.step);
    if (row.step == 3) {
      CHECK(row.alpha >= last_alpha);
      last_alpha = row.alpha;
    }
  }
  CHECK(max_step == 3);
  CHECK(last_alpha == 0.3);
  CHECK(std::isfinite(r.eps_l2_u));
  CHECK(std::isfinite(r.eps_l2_field));

  // Within one (step, alpha) leg the recorded loss never increases.
  double prev = std::numeric_limits<double>::infinity();
  double prev_alpha = -1.0;
  int prev_step = 0;
  for (const InverseReportRow& row : r.report) {
    if (row.step == prev_step && row.alpha == prev_alpha) CHECK(row.loss <= prev + 1e-12);
    prev = row.loss;
    prev_alpha = row.alpha;
    prev_step = row.step;
  }
}

TEST_CASE("conduction setup wiring") {
  const MeshPtr mesh = annulus_sector_mesh({0.05, 0.11}, {0.0, M_PI}, {10, 10}, true);
  MLPArchitecture state;
  state.widths = {2, 20, 20, 20, 20, 20, 1};
  state.activation = Activation::Softplus;
  MLPArchitecture eta;
  eta.widths = {2, 20, 20, 1};
  eta.activation = Activation::Softplus;

  ObservationSet obs;
  obs.points = {{0.0, 0.09}, {0.05, 0.05}};
  obs.values = Vec::Zero(2);
  const InverseConfig cfg = ihcp_setup(mesh, obs, state, 1, eta, 2);

  CHECK(cfg.problem.kappa(0.06, 0.0) == 1.0);    // inner layer
  CHECK(cfg.problem.kappa(0.012, 0.1) == 100.0); // outer layer (r > 0.08)
  CHECK(cfg.problem.neumann(0.05, 1e-9) == 0.0); // flat section
  CHECK(cfg.problem.neumann(0.0, 0.11) == doctest::Approx(-150.0)); // crown of the outer arc
  REQUIRE(cfg.unknowns.size() == 2);
  CHECK(cfg.unknowns[0].target == UnknownTarget::DirichletTrace);
  CHECK(cfg.unknowns[1].target == UnknownTarget::EtaNeumann);

  // The trace-unknown state space is unconstrained; the test space masks the
  // inner boundary.
  InverseModel model(cfg);
  CHECK(model.trial()->free_count() == model.trial()->dof_count());
  CHECK(model.test()->free_count() < model.test()->dof_count());

  const MeshPtr square = cartesian_mesh({0.0, 0.0}, {1.0, 1.0}, {2, 2});
  CHECK_THROWS_AS(ihcp_setup(square, obs, state, 1, eta, 2), std::invalid_argument);
}

TEST_CASE("staged conduction instance matches the reference counts") {
  MLPArchitecture state;
  state.widths = {2, 20, 1};
  MLPArchitecture eta;
  eta.widths = {2, 20, 1};
  const IhcpInstance inst = make_ihcp_instance({10, 10}, 10, state, 1, eta, 2);
  CHECK(inst.config.observations.points.size() == 100);
  CHECK(inst.mesh->cells.size() == 200);
  CHECK(std::isfinite(inst.truth.values.maxCoeff()));
  // Interior observation values live between the boundary extremes.
  CHECK(inst.config.observations.values.minCoeff() > 100.0);
  CHECK(inst.config.observations.values.maxCoeff() < 260.0);
}

TEST_SUITE_END();
