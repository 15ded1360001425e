#include <doctest.h>

#include "feinn/bfgs.hpp"
#include "feinn/forward.hpp"
#include "feinn/gmg.hpp"
#include "feinn/rng.hpp"
#include "feinn/sparse.hpp"

#include <Eigen/Dense>

#include <cmath>

using namespace feinn;

TEST_SUITE_BEGIN("linalg");

namespace {

SparseMatrix poisson_1d(int n) {
  // Tridiagonal (2, -1) operator.
  std::vector<SparseMatrix::Triplet> t;
  for (int i = 0; i < n; ++i) {
    t.emplace_back(i, i, 2.0);
    if (i > 0) t.emplace_back(i, i - 1, -1.0);
    if (i + 1 < n) t.emplace_back(i, i + 1, -1.0);
  }
  return SparseMatrix::from_triplets(n, n, t);
}

// Dense elimination oracle.
Vec dense_solve(const SparseMatrix& A, const Vec& b) {
  Mat D = Mat(A.eigen());
  return D.fullPivLu().solve(b);
}

} // namespace

TEST_CASE("factorize and solve") {
  SUBCASE("identity") {
    std::vector<SparseMatrix::Triplet> t;
    for (int i = 0; i < 5; ++i) t.emplace_back(i, i, 1.0);
    const SparseMatrix I = SparseMatrix::from_triplets(5, 5, t);
    Vec b(5);
    b << 1, 2, 3, 4, 5;
    CHECK((factorize(I, false).solve(b) - b).norm() == 0.0);
  }
  SUBCASE("1D Poisson against dense elimination") {
    const SparseMatrix A = poisson_1d(5);
    const Vec b = Vec::Ones(5);
    const Vec x = factorize(A, true).solve(b);
    CHECK((x - dense_solve(A, b)).lpNorm<Eigen::Infinity>() < 1e-12);
    CHECK((A * x - b).norm() <= 1e-10 * b.norm());
  }
  SUBCASE("factorization is reused across solves") {
    const SparseMatrix A = poisson_1d(64);
    const Factorization F = factorize(A, false);
    const long before = factorization_count();
    const Vec x1 = F.solve(Vec::Ones(64));
    Vec b2 = Vec::Zero(64);
    b2(10) = 1.0;
    const Vec x2 = F.solve(b2);
    CHECK(factorization_count() == before); // no refactorization happened
    CHECK(F.solves_performed() == 2);
    CHECK((A * x2 - b2).norm() < 1e-10);
  }
  SUBCASE("transpose solve") {
    std::vector<SparseMatrix::Triplet> t{{0, 0, 2.0}, {0, 1, 1.0}, {1, 0, -0.5}, {1, 1, 3.0}};
    const SparseMatrix A = SparseMatrix::from_triplets(2, 2, t);
    Vec b(2);
    b << 1.0, -2.0;
    const Vec x = factorize(A, false).solve_transpose(b);
    CHECK((A.transpose_times(x) - b).norm() < 1e-13);
  }
  SUBCASE("singular matrix is reported") {
    std::vector<SparseMatrix::Triplet> t{{0, 0, 1.0}, {1, 0, 1.0}, {0, 1, 1.0}, {1, 1, 1.0}};
    const SparseMatrix A = SparseMatrix::from_triplets(2, 2, t);
    CHECK_THROWS_AS(factorize(A, false), SingularMatrixError);
  }
}

TEST_CASE("prolongation") {
  const MeshPtr coarse_mesh = cartesian_mesh({0.0, 0.0}, {1.0, 1.0}, {2, 2});
  const MeshPtr fine_mesh = uniform_refine(coarse_mesh, 2);
  const FESpacePtr coarse = lagrangian_space(coarse_mesh, 1, {});
  const FESpacePtr fine = lagrangian_space(fine_mesh, 1, {});
  const SparseMatrix P = prolongation(coarse, fine);

  SUBCASE("rows sum to one (partition of unity)") {
    const Vec ones = P * Vec::Ones(coarse->dof_count());
    CHECK((ones - Vec::Ones(fine->dof_count())).lpNorm<Eigen::Infinity>() < 1e-14);
  }
  SUBCASE("edge midpoints average their parents") {
    // Find a fine node sitting at (0.25, 0): interpolates (0,0) and (0.5,0).
    const Vec coarse_x = [&] {
      Vec v(coarse->dof_count());
      for (int i = 0; i < coarse->dof_count(); ++i) v(i) = coarse->dof_coords[static_cast<std::size_t>(i)][0];
      return v;
    }();
    const Vec fine_x = P * coarse_x;
    for (int i = 0; i < fine->dof_count(); ++i)
      CHECK(fine_x(i) == doctest::Approx(fine->dof_coords[static_cast<std::size_t>(i)][0]).epsilon(1e-13));
  }
  SUBCASE("matches dense construction") {
    // Oracle: dense interpolation weights by evaluating coarse hats at fine nodes.
    Mat dense = Mat::Zero(fine->dof_count(), coarse->dof_count());
    for (int j = 0; j < coarse->dof_count(); ++j) {
      FEFunction hat;
      hat.space = coarse;
      hat.values = Vec::Zero(coarse->dof_count());
      hat.values(j) = 1.0;
      const MLP dummy{};
      (void)dummy;
      for (int i = 0; i < fine->dof_count(); ++i) {
        // evaluate the coarse hat at each fine node through lineage
        const Point x = fine->dof_coords[static_cast<std::size_t>(i)];
        // brute force: find a coarse cell containing the node
        double v = 0.0;
        for (int c = 0; c < static_cast<int>(coarse_mesh->cells.size()); ++c) {
          const Point lo = coarse_mesh->vertices[static_cast<std::size_t>(coarse_mesh->cells[static_cast<std::size_t>(c)].vertices[0])];
          const Point hi = coarse_mesh->vertices[static_cast<std::size_t>(coarse_mesh->cells[static_cast<std::size_t>(c)].vertices[2])];
          if (x[0] < lo[0] - 1e-12 || x[0] > hi[0] + 1e-12 || x[1] < lo[1] - 1e-12 || x[1] > hi[1] + 1e-12) continue;
          const Point ref{2.0 * (x[0] - lo[0]) / (hi[0] - lo[0]) - 1.0, 2.0 * (x[1] - lo[1]) / (hi[1] - lo[1]) - 1.0};
          v = hat.eval_ref(c, ref);
          break;
        }
        dense(i, j) = v;
      }
    }
    const Mat sparse_P = Mat(P.eigen());
    CHECK((sparse_P - dense).lpNorm<Eigen::Infinity>() < 1e-12);
  }
  SUBCASE("non-nested spaces are rejected") {
    const FESpacePtr other = lagrangian_space(cartesian_mesh({0.0, 0.0}, {1.0, 1.0}, {3, 3}), 1, {});
    CHECK_THROWS_AS(prolongation(coarse, other), std::invalid_argument);
  }
}

TEST_CASE("multigrid V-cycles") {
  ProblemDefinition poisson;
  poisson.kappa = [](double, double) { return 1.0; };
  poisson.dirichlet_tags = {"left", "right", "bottom", "top"};

  std::vector<FESpacePtr> spaces;
  MeshPtr m = cartesian_mesh({0.0, 0.0}, {1.0, 1.0}, {4, 4});
  spaces.push_back(lagrangian_space(m, 1, poisson.dirichlet_tags));
  for (int l = 0; l < 2; ++l) {
    m = uniform_refine(m, 2);
    spaces.push_back(lagrangian_space(m, 1, poisson.dirichlet_tags));
  }
  GMGOptions opts;
  opts.cycles = 1;
  const GMGHierarchy gmg(poisson, spaces, opts);
  const int n = gmg.finest_size();
  const SparseMatrix A = WeakForm(poisson, spaces.back(), spaces.back()).system_matrix();

  SUBCASE("zero in, zero out") { CHECK(gmg.apply(Vec::Zero(n)).norm() == 0.0); }

  SUBCASE("linearity") {
    Rng rng(5);
    Vec r1(n), r2(n);
    for (int i = 0; i < n; ++i) {
      r1(i) = rng.uniform(-1.0, 1.0);
      r2(i) = rng.uniform(-1.0, 1.0);
    }
    const Vec sum = gmg.apply(r1 + r2);
    const Vec split = gmg.apply(r1) + gmg.apply(r2);
    CHECK((sum - split).lpNorm<Eigen::Infinity>() < 1e-12 * sum.norm());
  }

  SUBCASE("one V-cycle contracts the error against the exact solve") {
    // Oracle: exact solution via direct factorization.
    Rng rng(6);
    Vec b(n);
    for (int i = 0; i < n; ++i) b(i) = rng.uniform(-1.0, 1.0);
    const Vec exact = factorize(A, true).solve(b);
    const Vec z = gmg.apply(b);
    const Vec err = exact - z;
    const double a_norm = std::sqrt(err.dot(A * err));
    const double a_norm0 = std::sqrt(exact.dot(A * exact));
    CHECK(a_norm / a_norm0 <= 0.2);
  }

  SUBCASE("symmetric smoothing makes the cycle self-adjoint for Poisson") {
    Rng rng(7);
    Vec r1(n), r2(n);
    for (int i = 0; i < n; ++i) {
      r1(i) = rng.uniform(-1.0, 1.0);
      r2(i) = rng.uniform(-1.0, 1.0);
    }
    CHECK(r2.dot(gmg.apply(r1)) == doctest::Approx(r1.dot(gmg.apply(r2))).epsilon(1e-11));
    // apply_transpose agrees with apply for the symmetric operator
    CHECK((gmg.apply(r1) - gmg.apply_transpose(r1)).lpNorm<Eigen::Infinity>() < 1e-11);
  }

  SUBCASE("transpose is the exact adjoint for nonsymmetric operators") {
    ProblemDefinition cdr = poisson;
    cdr.beta = [](double, double) { return Point{2.0, 3.0}; };
    const GMGHierarchy gmg_cdr(cdr, spaces, opts);
    Rng rng(8);
    Vec r1(n), r2(n);
    for (int i = 0; i < n; ++i) {
      r1(i) = rng.uniform(-1.0, 1.0);
      r2(i) = rng.uniform(-1.0, 1.0);
    }
    CHECK(r2.dot(gmg_cdr.apply(r1)) == doctest::Approx(r1.dot(gmg_cdr.apply_transpose(r2))).epsilon(1e-11));
  }
}

TEST_CASE("BFGS minimization") {
  SUBCASE("exact quadratic |x|^2 in two iterations") {
    auto fg = [](const Vec& x, Vec& g) {
      g = 2.0 * x;
      return x.squaredNorm();
    };
    Vec x0(4);
    x0 << 1.0, -2.0, 0.5, 3.0;
    const BfgsResult r = bfgs_minimize(fg, x0, {.max_iters = 10, .grad_tol = 1e-10});
    CHECK(r.iterations <= 2);
    CHECK(r.x.lpNorm<Eigen::Infinity>() < 1e-10);
  }

  SUBCASE("convex quadratic reaches the closed-form minimizer") {
    // Oracle: x* = -A^{-1} b for f = 0.5 x'Ax + b'x with fixed SPD A.
    const int n = 10;
    Mat A = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i) {
      A(i, i) = 2.0 + 0.3 * i;
      if (i > 0) {
        A(i, i - 1) = 0.5;
        A(i - 1, i) = 0.5;
      }
    }
    Vec b(n);
    Rng rng(3);
    for (int i = 0; i < n; ++i) b(i) = rng.uniform(-1.0, 1.0);
    const Vec xstar = -A.fullPivLu().solve(b);
    auto fg = [&](const Vec& x, Vec& g) {
      g = A * x + b;
      return 0.5 * x.dot(A * x) + b.dot(x);
    };
    const BfgsResult r = bfgs_minimize(fg, Vec::Zero(n), {.max_iters = 11, .grad_tol = 1e-14});
    CHECK(r.iterations <= 11);
    CHECK((r.x - xstar).lpNorm<Eigen::Infinity>() < 1e-8);
  }

  SUBCASE("Rosenbrock from the classic start") {
    auto fg = [](const Vec& x, Vec& g) {
      const double a = 1.0 - x(0), b = x(1) - x(0) * x(0);
      g.resize(2);
      g(0) = -2.0 * a - 400.0 * x(0) * b;
      g(1) = 200.0 * b;
      return a * a + 100.0 * b * b;
    };
    Vec x0(2);
    x0 << -1.2, 1.0;
    const BfgsResult r = bfgs_minimize(fg, x0, {.max_iters = 200, .grad_tol = 1e-10});
    CHECK(r.iterations <= 200);
    CHECK(std::abs(r.x(0) - 1.0) < 1e-6);
    CHECK(std::abs(r.x(1) - 1.0) < 1e-6);
  }

  SUBCASE("accepted steps never increase the loss") {
    auto fg = [](const Vec& x, Vec& g) {
      g.resize(2);
      const double f = std::pow(x(0) - 1.0, 4) + std::cosh(x(1));
      g(0) = 4.0 * std::pow(x(0) - 1.0, 3);
      g(1) = std::sinh(x(1));
      return f;
    };
    Vec x0(2);
    x0 << 3.0, 2.0;
    const BfgsResult r = bfgs_minimize(fg, x0, {.max_iters = 60});
    for (std::size_t i = 1; i < r.history.size(); ++i) CHECK(r.history[i] <= r.history[i - 1] + 1e-15);
    CHECK(r.history.size() <= 61);
  }

  SUBCASE("L-BFGS mode matches on a quadratic") {
    Mat A = Mat::Identity(20, 20) * 3.0;
    Vec b = Vec::LinSpaced(20, -1.0, 1.0);
    auto fg = [&](const Vec& x, Vec& g) {
      g = A * x + b;
      return 0.5 * x.dot(A * x) + b.dot(x);
    };
    BfgsOptions opts;
    opts.max_iters = 100;
    opts.grad_tol = 1e-12;
    opts.lbfgs_memory = 10;
    const BfgsResult r = bfgs_minimize(fg, Vec::Ones(20), opts);
    CHECK((A * r.x + b).lpNorm<Eigen::Infinity>() < 1e-9);
  }
}

TEST_SUITE_END();
