#include <doctest.h>

#include "feinn/assembly.hpp"
#include "feinn/fespace.hpp"
#include "feinn/rng.hpp"

#include <cmath>

using namespace feinn;

TEST_SUITE_BEGIN("fespace");

TEST_CASE("single quad, order 1") {
  const MeshPtr m = cartesian_mesh({0.0, 0.0}, {1.0, 1.0}, {1, 1});
  const FESpacePtr s = lagrangian_space(m, 1, {});
  CHECK(s->dof_count() == 4);
  CHECK(s->free_count() == 4);
}

TEST_CASE("DOF counts match the tensor-product formula") {
  const MeshPtr m = cartesian_mesh({0.0, 0.0}, {1.0, 1.0}, {2, 2});
  CHECK(lagrangian_space(m, 2, {})->dof_count() == 25);
  CHECK(lagrangian_space(m, 3, {})->dof_count() == 49);
}

TEST_CASE("paper-scale counts: order 6 on 15x15 with two Dirichlet sides") {
  const MeshPtr m = cartesian_mesh({0.0, 0.0}, {1.0, 1.0}, {15, 15});
  const FESpacePtr s = lagrangian_space(m, 6, {"left", "right"});
  CHECK(s->dof_count() == 8281); // (6*15+1)^2
  CHECK(s->free_count() == 8281 - 2 * 91);
  CHECK(s->free_count() == 8099);
}

TEST_CASE("unknown Dirichlet tag is rejected") {
  const MeshPtr m = cartesian_mesh({0.0, 0.0}, {1.0, 1.0}, {2, 2});
  CHECK_THROWS_AS(lagrangian_space(m, 1, {"north"}), std::invalid_argument);
}

TEST_CASE("free plus masked equals total") {
  const MeshPtr m = cartesian_mesh({0.0, 0.0}, {1.0, 1.0}, {4, 3});
  for (int k : {1, 2, 3}) {
    const FESpacePtr s = lagrangian_space(m, k, {"left", "top"});
    int masked = 0;
    for (auto b : s->dirichlet_mask) masked += b;
    CHECK(masked + s->free_count() == s->dof_count());
  }
}

TEST_CASE("interpolation reproduces constants and linears") {
  const MeshPtr m = cartesian_mesh({0.0, 0.0}, {1.0, 1.0}, {3, 3});
  const FESpacePtr s = lagrangian_space(m, 1, {});
  const FEFunction ones = interpolate([](double, double) { return 1.0; }, s, false);
  CHECK(ones.values.minCoeff() == 1.0);
  CHECK(ones.values.maxCoeff() == 1.0);
  const FEFunction lin = interpolate([](double x, double) { return x; }, s, false);
  for (int d = 0; d < s->dof_count(); ++d)
    CHECK(lin.values(d) == doctest::Approx(s->dof_coords[static_cast<std::size_t>(d)][0]).epsilon(1e-15));
}

TEST_CASE("zero-trace interpolation zeroes masked DOFs exactly") {
  const MeshPtr m = cartesian_mesh({0.0, 0.0}, {1.0, 1.0}, {3, 3});
  const FESpacePtr s = lagrangian_space(m, 2, {"left", "right"});
  const FEFunction u = interpolate([](double x, double y) { return 1.0 + x + y; }, s, true);
  for (int d = 0; d < s->dof_count(); ++d)
    if (s->dirichlet_mask[static_cast<std::size_t>(d)]) CHECK(u.values(d) == 0.0);
}

TEST_CASE("non-finite data names the node") {
  const MeshPtr m = cartesian_mesh({0.0, 0.0}, {1.0, 1.0}, {2, 2});
  const FESpacePtr s = lagrangian_space(m, 1, {});
  CHECK_THROWS_AS(interpolate([](double x, double) { return 1.0 / x; }, s, false), NumericError);
}

TEST_CASE("1D interpolation error decays at second order") {
  // Oracle: oversampled-quadrature L2 error of the nodal interpolant of
  // sin(pi x) on n and 2n cells; the ratio approaches 4.
  auto interp_error = [](int n) {
    const MeshPtr m = cartesian_mesh({0.0, 0.0}, {1.0, 0.0}, {n, 0});
    const FESpacePtr s = lagrangian_space(m, 1, {});
    const FEFunction u = interpolate([](double x, double) { return std::sin(M_PI * x); }, s, false);
    return error_norms([](double x, double) { return std::sin(M_PI * x); },
                       [](double x, double) { return Point{M_PI * std::cos(M_PI * x), 0.0}; }, u, 12)
        .l2;
  };
  const double ratio = interp_error(8) / interp_error(16);
  CHECK(ratio > 3.6);
  CHECK(ratio < 4.4);
}

TEST_CASE("interpolation is idempotent on FE functions") {
  const MeshPtr m = cartesian_mesh({0.0, 0.0}, {1.0, 1.0}, {3, 2});
  const FESpacePtr s = lagrangian_space(m, 3, {});
  const FEFunction u = interpolate([](double x, double y) { return std::sin(x) * y + x * x; }, s, false);
  // Re-interpolating the function's own pointwise evaluation reproduces it.
  FEFunction v;
  v.space = s;
  v.values = Vec::Zero(s->dof_count());
  for (int c = 0; c < static_cast<int>(m->cells.size()); ++c) {
    const ReferenceElement& el = ReferenceElement::get(m->cells[static_cast<std::size_t>(c)].shape, 3);
    const int* dofs = s->cell_dof_ptr(c);
    for (int i = 0; i < el.node_count(); ++i)
      v.values(dofs[i]) = u.eval_ref(c, el.nodes[static_cast<std::size_t>(i)]);
  }
  CHECK((v.values - u.values).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("polynomial reproduction up to the space order") {
  const MeshPtr m = cartesian_mesh({0.0, 0.0}, {1.0, 1.0}, {2, 2});
  for (int k : {1, 2, 3, 4}) {
    const FESpacePtr s = lagrangian_space(m, k, {});
    auto poly = [k](double x, double y) { return std::pow(0.3 + x, k) + std::pow(y, k) + (k > 1 ? x * y : 0.0); };
    const FEFunction u = interpolate(poly, s, false);
    // Evaluate at off-node points; a degree-k space reproduces degree-k polynomials.
    for (const Point ref : {Point{0.17, -0.43}, Point{-0.71, 0.62}}) {
      for (int c = 0; c < 4; ++c) {
        const Point x = m->map_cell(c, ref).x;
        CHECK(u.eval_ref(c, ref) == doctest::Approx(poly(x[0], x[1])).epsilon(1e-11));
      }
    }
  }
}

TEST_CASE("triangle spaces are conforming across edges") {
  const MeshPtr m = annulus_sector_mesh({0.5, 1.0}, {0.0, 1.5}, {3, 3}, true);
  for (int k : {1, 2, 3}) {
    const FESpacePtr s = lagrangian_space(m, k, {});
    const FEFunction u = interpolate([k](double x, double y) { return std::pow(x + 0.5 * y, k); }, s, false);
    // Values agree when evaluated from both sides of interior edges: check
    // via midpoints of shared edges (polynomial reproduction makes both
    // sides equal the polynomial itself).
    for (int c = 0; c < static_cast<int>(m->cells.size()); ++c) {
      const Point mid{1.0 / 3.0, 1.0 / 3.0};
      const Point x = m->map_cell(c, mid).x;
      CHECK(u.eval_ref(c, mid) == doctest::Approx(std::pow(x[0] + 0.5 * x[1], k)).epsilon(1e-10));
    }
  }
}

TEST_CASE("offset function modes") {
  const MeshPtr m = cartesian_mesh({0.0, 0.0}, {1.0, 1.0}, {4, 4});
  const FESpacePtr s = lagrangian_space(m, 2, {"left", "right", "bottom", "top"});

  SUBCASE("zero data gives the zero function") {
    for (OffsetMode mode : {OffsetMode::ZeroExtension, OffsetMode::HarmonicExtension}) {
      const FEFunction u = offset_function([](double, double) { return 0.0; }, s, mode);
      CHECK(u.values.lpNorm<Eigen::Infinity>() == 0.0);
    }
  }
  SUBCASE("constants extend exactly in harmonic mode") {
    const FEFunction u = offset_function([](double, double) { return 3.25; }, s, OffsetMode::HarmonicExtension);
    CHECK(u.values.minCoeff() == doctest::Approx(3.25).epsilon(1e-12));
    CHECK(u.values.maxCoeff() == doctest::Approx(3.25).epsilon(1e-12));
  }
  SUBCASE("linear boundary data is discretely harmonic") {
    // Oracle: the direct solve must reproduce g(x, y) = x at every node.
    const FEFunction u = offset_function([](double x, double) { return x; }, s, OffsetMode::HarmonicExtension);
    for (int d = 0; d < s->dof_count(); ++d)
      CHECK(u.values(d) == doctest::Approx(s->dof_coords[static_cast<std::size_t>(d)][0]).epsilon(1e-11));
  }
  SUBCASE("zero extension leaves the interior at zero") {
    const FEFunction u = offset_function([](double, double) { return 1.0; }, s, OffsetMode::ZeroExtension);
    for (int d = 0; d < s->dof_count(); ++d)
      CHECK(u.values(d) == (s->dirichlet_mask[static_cast<std::size_t>(d)] ? 1.0 : 0.0));
  }
  SUBCASE("empty Dirichlet set is rejected") {
    const FESpacePtr free_space = lagrangian_space(m, 1, {});
    CHECK_THROWS_AS(offset_function([](double, double) { return 1.0; }, free_space, OffsetMode::ZeroExtension),
                    std::invalid_argument);
  }
}

TEST_CASE("linearized test space matches the trial free dimension") {
  const MeshPtr m = cartesian_mesh({0.0, 0.0}, {1.0, 1.0}, {2, 2});
  for (int k = 1; k <= 6; ++k) {
    const FESpacePtr trial = lagrangian_space(m, k, {"left", "right"});
    const FESpacePtr lin = linearized_test_space(trial);
    CHECK(lin->order == 1);
    CHECK(lin->free_count() == trial->free_count());
    const FESpacePtr all = lagrangian_space(m, k, {"left", "right", "bottom", "top"});
    CHECK(linearized_test_space(all)->free_count() == all->free_count());
  }
}

TEST_CASE("paper-scale linearized dimension equality") {
  const MeshPtr m = cartesian_mesh({0.0, 0.0}, {1.0, 1.0}, {15, 15});
  const FESpacePtr trial = lagrangian_space(m, 6, {"left", "right"});
  const FESpacePtr lin = linearized_test_space(trial);
  CHECK(lin->free_count() == 8099);
  CHECK(lin->free_count() == trial->free_count());
}

TEST_CASE("network interpolation") {
  const MeshPtr m = cartesian_mesh({0.0, 0.0}, {1.0, 1.0}, {3, 3});
  const FESpacePtr s = lagrangian_space(m, 2, {"left"});

  SUBCASE("zero parameters give the zero function") {
    MLP net;
    net.arch.widths = {2, 5, 1};
    net.theta = Vec::Zero(net.arch.param_count());
    const FEFunction u = interpolate_nn(net, s, false);
    CHECK(u.values.lpNorm<Eigen::Infinity>() == 0.0);
  }
  SUBCASE("matches pointwise interpolation of the network closure") {
    MLP net;
    net.arch.widths = {2, 8, 1};
    net.theta = glorot_init(net.arch, 7);
    const FEFunction a = interpolate_nn(net, s, true);
    const FEFunction b = interpolate(
        [&](double x, double y) {
          Mat p(1, 2);
          p << x, y;
          return forward(net.arch, net.theta, p)(0);
        },
        s, true);
    CHECK((a.values - b.values).lpNorm<Eigen::Infinity>() == 0.0);
  }
  SUBCASE("input width must match the mesh dimension") {
    MLP net;
    net.arch.widths = {3, 4, 1};
    net.theta = Vec::Zero(net.arch.param_count());
    CHECK_THROWS_AS(interpolate_nn(net, s, false), std::invalid_argument);
  }
}

TEST_CASE("relu emulator reproduces 1D targets exactly") {
  const MeshPtr m = cartesian_mesh({0.0, 0.0}, {1.0, 0.0}, {9, 0});
  const FESpacePtr s = lagrangian_space(m, 1, {"left", "right"});
  Rng rng(42);
  for (int trial = 0; trial < 3; ++trial) {
    FEFunction target;
    target.space = s;
    target.values = Vec::Zero(s->dof_count());
    for (int i = 0; i < s->free_count(); ++i)
      target.values(s->free_dofs[static_cast<std::size_t>(i)]) = rng.uniform(-2.0, 2.0);
    const MLP net = relu_emulator(target);
    CHECK(net.arch.widths[1] == 3 * s->free_count());
    CHECK(net.arch.widths[2] == s->free_count());
    const FEFunction back = interpolate_nn(net, s, true);
    CHECK((back.values - target.values).lpNorm<Eigen::Infinity>() < 1e-12);
  }
}

TEST_SUITE_END();
