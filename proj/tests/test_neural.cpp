#include <doctest.h>

#include "feinn/neural.hpp"
#include "feinn/rng.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

using namespace feinn;

TEST_SUITE_BEGIN("neural");

namespace {

Mat random_points(int n, int dim, std::uint64_t seed) {
  Rng rng(seed);
  Mat p(n, dim);
  for (int i = 0; i < n; ++i)
    for (int d = 0; d < dim; ++d) p(i, d) = rng.uniform(-1.0, 1.0);
  return p;
}

} // namespace

TEST_CASE("glorot bounds, zero biases and determinism") {
  MLPArchitecture arch;
  arch.widths = {2, 50, 50, 1};
  const Vec a = glorot_init(arch, 11);
  const Vec b = glorot_init(arch, 11);
  CHECK((a - b).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((a - glorot_init(arch, 12)).lpNorm<Eigen::Infinity>() > 0.0);

  const double* p = a.data();
  double mean = 0.0;
  long count = 0;
  for (int k = 1; k <= arch.layers(); ++k) {
    const int rows = arch.widths[static_cast<std::size_t>(k)], cols = arch.widths[static_cast<std::size_t>(k - 1)];
    const double bound = std::sqrt(6.0 / (rows + cols));
    for (int i = 0; i < rows * cols; ++i) {
      CHECK(std::abs(p[i]) <= bound);
      mean += p[i];
      ++count;
    }
    p += rows * cols;
    for (int i = 0; i < rows; ++i) CHECK(p[i] == 0.0);
    p += rows;
  }
  // Empirical mean within 3 standard errors of the uniform-mean estimator.
  const double bound1 = std::sqrt(6.0 / 52.0);
  const double se = std::sqrt(bound1 * bound1 / 3.0 / static_cast<double>(count));
  CHECK(std::abs(mean / static_cast<double>(count)) < 3.0 * se);
}

TEST_CASE("zero parameters propagate to zero output") {
  MLPArchitecture arch;
  arch.widths = {2, 7, 7, 1};
  for (Activation act : {Activation::Tanh, Activation::Softplus, Activation::Relu}) {
    arch.activation = act;
    Vec theta = Vec::Zero(arch.param_count());
    const Vec out = forward(arch, theta, random_points(5, 2, 3));
    // softplus(0) = log 2 feeds zero weights downstream, so the output is b_L = 0
    CHECK(out.lpNorm<Eigen::Infinity>() == 0.0);
  }
  arch.activation = Activation::Tanh;
  arch.rectifier = Rectifier::AbsPlusEps;
  arch.rectifier_eps = 0.01;
  const Vec out = forward(arch, Vec::Zero(arch.param_count()), random_points(4, 2, 3));
  for (Eigen::Index i = 0; i < out.size(); ++i) CHECK(out(i) == 0.01);
}

TEST_CASE("relu hat construction: value 1 at the peak, 0 outside") {
  // f = rho(2x) - rho(4x - 2) + rho(2x - 2)
  MLPArchitecture arch;
  arch.widths = {1, 3, 1};
  arch.activation = Activation::Relu;
  Vec theta = Vec::Zero(arch.param_count());
  theta(0) = 2.0;
  theta(1) = 4.0;
  theta(2) = 2.0; // W1
  theta(3) = 0.0;
  theta(4) = -2.0;
  theta(5) = -2.0; // b1
  theta(6) = 1.0;
  theta(7) = -1.0;
  theta(8) = 1.0; // W2
  Mat pts(5, 1);
  pts << -0.5, 0.0, 0.5, 1.0, 1.5;
  const Vec out = forward(arch, theta, pts);
  CHECK(out(0) == 0.0);
  CHECK(out(1) == 0.0);
  CHECK(out(2) == doctest::Approx(1.0));
  CHECK(out(3) == 0.0);
  CHECK(out(4) == 0.0);
}

TEST_CASE("single affine layer is exactly W x + b") {
  MLPArchitecture arch;
  arch.widths = {2, 1};
  Vec theta(3);
  theta << 1.5, -2.0, 0.25; // W = [1.5, -2], b = 0.25
  Mat pts(2, 2);
  pts << 1.0, 2.0, -0.5, 0.5;
  const Vec out = forward(arch, theta, pts);
  CHECK(out(0) == doctest::Approx(1.5 * 1.0 - 2.0 * 2.0 + 0.25));
  CHECK(out(1) == doctest::Approx(1.5 * -0.5 - 2.0 * 0.5 + 0.25));
  const Mat g = grad_input(arch, theta, pts);
  CHECK(g(0, 0) == doctest::Approx(1.5));
  CHECK(g(0, 1) == doctest::Approx(-2.0));
  CHECK(g(1, 0) == doctest::Approx(1.5));
}

TEST_CASE("input gradient matches central differences") {
  MLPArchitecture arch;
  arch.widths = {2, 12, 12, 1};
  arch.activation = Activation::Tanh;
  const Vec theta = glorot_init(arch, 5);
  const Mat pts = random_points(10, 2, 9);
  const Mat g = grad_input(arch, theta, pts);
  const double eps = 1e-6;
  for (int i = 0; i < 10; ++i) {
    for (int d = 0; d < 2; ++d) {
      Mat plus = pts.row(i), minus = pts.row(i);
      plus(0, d) += eps;
      minus(0, d) -= eps;
      const double fd = (forward(arch, theta, plus)(0) - forward(arch, theta, minus)(0)) / (2 * eps);
      CHECK(g(i, d) == doctest::Approx(fd).epsilon(1e-6));
    }
  }
  // Zero parameters give a zero gradient.
  const Mat gz = grad_input(arch, Vec::Zero(arch.param_count()), pts);
  CHECK(gz.lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("parameter VJP: full finite-difference sweep on a small net") {
  MLPArchitecture arch;
  arch.widths = {1, 3, 1};
  arch.activation = Activation::Tanh;
  const Vec theta = glorot_init(arch, 2);
  const Mat pts = random_points(6, 1, 4);
  Rng rng(17);
  Vec cot(6);
  for (int i = 0; i < 6; ++i) cot(i) = rng.uniform(-1.0, 1.0);

  const Vec g = vjp_params(arch, theta, pts, cot);
  const double eps = 1e-6;
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    Vec tp = theta, tm = theta;
    tp(j) += eps;
    tm(j) -= eps;
    const double fd = cot.dot(forward(arch, tp, pts) - forward(arch, tm, pts)) / (2 * eps);
    CHECK(g(j) == doctest::Approx(fd).epsilon(1e-7));
  }
}

TEST_CASE("VJP with rectifiers matches finite differences") {
  for (Rectifier rect : {Rectifier::AbsPlusEps, Rectifier::SquarePlusEps}) {
    MLPArchitecture arch;
    arch.widths = {2, 6, 1};
    arch.activation = Activation::Softplus;
    arch.rectifier = rect;
    const Vec theta = glorot_init(arch, 3);
    const Mat pts = random_points(5, 2, 8);
    const Vec cot = Vec::Ones(5);
    const Vec g = vjp_params(arch, theta, pts, cot);
    const double eps = 1e-6;
    for (Eigen::Index j = 0; j < theta.size(); j += 7) {
      Vec tp = theta, tm = theta;
      tp(j) += eps;
      tm(j) -= eps;
      const double fd = cot.dot(forward(arch, tp, pts) - forward(arch, tm, pts)) / (2 * eps);
      CHECK(g(j) == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("VJP properties: zero cotangents, linearity, batch additivity") {
  MLPArchitecture arch;
  arch.widths = {2, 9, 1};
  const Vec theta = glorot_init(arch, 21);
  const Mat pts = random_points(8, 2, 22);
  CHECK(vjp_params(arch, theta, pts, Vec::Zero(8)).lpNorm<Eigen::Infinity>() == 0.0);

  Rng rng(23);
  Vec c1(8), c2(8);
  for (int i = 0; i < 8; ++i) {
    c1(i) = rng.uniform(-1.0, 1.0);
    c2(i) = rng.uniform(-1.0, 1.0);
  }
  const Vec lin = vjp_params(arch, theta, pts, c1 + 2.0 * c2);
  const Vec split = vjp_params(arch, theta, pts, c1) + 2.0 * vjp_params(arch, theta, pts, c2);
  CHECK((lin - split).lpNorm<Eigen::Infinity>() < 1e-12);

  const Vec whole = vjp_params(arch, theta, pts, c1);
  const Vec parts = vjp_params(arch, theta, pts.topRows(3), c1.head(3)) +
                    vjp_params(arch, theta, pts.bottomRows(5), c1.tail(5));
  CHECK((whole - parts).lpNorm<Eigen::Infinity>() < 1e-13);
}

TEST_CASE("forward is pure and deterministic") {
  MLPArchitecture arch;
  arch.widths = {2, 30, 30, 1};
  const Vec theta = glorot_init(arch, 77);
  const Mat pts = random_points(64, 2, 78);
  const Vec a = forward(arch, theta, pts);
  const Vec b = forward(arch, theta, pts);
  CHECK((a - b).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("tanh hidden activations stay inside (-1, 1)") {
  MLPArchitecture arch;
  arch.widths = {2, 20, 20, 20, 1};
  arch.activation = Activation::Tanh;
  const Vec theta = glorot_init(arch, 31);
  const auto acts = forward_activations(arch, theta, random_points(40, 2, 32));
  for (std::size_t k = 0; k + 1 < acts.size(); ++k) { // hidden layers only
    CHECK(acts[k].maxCoeff() < 1.0);
    CHECK(acts[k].minCoeff() > -1.0);
  }
}

TEST_CASE("abs rectifier keeps outputs at or above eps") {
  MLPArchitecture arch;
  arch.widths = {2, 10, 1};
  arch.rectifier = Rectifier::AbsPlusEps;
  arch.rectifier_eps = 0.01;
  const Vec theta = glorot_init(arch, 55);
  const Vec out = forward(arch, theta, random_points(200, 2, 56));
  CHECK(out.minCoeff() >= 0.01);
}

TEST_CASE("checkpoint round-trip") {
  MLP net;
  net.arch.widths = {2, 5, 1};
  net.arch.activation = Activation::Softplus;
  net.arch.rectifier = Rectifier::AbsPlusEps;
  net.theta = glorot_init(net.arch, 99);
  const std::string path = (std::filesystem::temp_directory_path() / "feinn_ckpt_test.bin").string();
  save_checkpoint(path, net, 99);
  std::uint64_t seed = 0;
  const MLP back = load_checkpoint(path, &seed);
  CHECK(seed == 99);
  CHECK(back.arch.widths == net.arch.widths);
  CHECK(back.arch.activation == net.arch.activation);
  CHECK(back.arch.rectifier == net.arch.rectifier);
  CHECK((back.theta - net.theta).lpNorm<Eigen::Infinity>() == 0.0);
  std::remove(path.c_str());
}

TEST_SUITE_END();
