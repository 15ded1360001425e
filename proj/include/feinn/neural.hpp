#pragma once

#include "feinn/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace feinn {

enum class Activation : std::uint8_t { Tanh, Softplus, Relu };
enum class Rectifier : std::uint8_t { None, AbsPlusEps, SquarePlusEps };

/// Fully-connected feed-forward architecture. widths = (n0, ..., nL); the
/// activation acts after every affine map except the last; the rectifier,
/// when set, maps the final scalar output (|x| + eps keeps coefficient
/// fields positive).
struct MLPArchitecture {
  std::vector<int> widths;
  Activation activation = Activation::Tanh;
  Rectifier rectifier = Rectifier::None;
  double rectifier_eps = 0.01;

  int layers() const { return static_cast<int>(widths.size()) - 1; }
  int input_dim() const { return widths.front(); }
  Eigen::Index param_count() const;
  void check() const;
};

/// Flat parameter vector: per layer, W_k row-major then b_k.
struct MLP {
  MLPArchitecture arch;
  Vec theta;
};

/// Weights uniform on +-sqrt(6 / (fan_in + fan_out)), biases zero;
/// deterministic per seed (mt19937_64 stream, see Rng).
Vec glorot_init(const MLPArchitecture& arch, std::uint64_t seed);

/// Batched evaluation at `points` (rows of an N x n0 matrix).
Vec forward(const MLPArchitecture& arch, const Vec& theta, const Mat& points);

/// Spatial gradient d N(theta) / dx at each point, by layer-wise chain rule.
Mat grad_input(const MLPArchitecture& arch, const Vec& theta, const Mat& points);

/// Reverse accumulation of sum_p cotangent_p * d N(theta)(x_p) / d theta.
Vec vjp_params(const MLPArchitecture& arch, const Vec& theta, const Mat& points, const Vec& cotangents);

/// Hidden-layer activations after evaluating `points`; for inspection/tests.
std::vector<Mat> forward_activations(const MLPArchitecture& arch, const Vec& theta, const Mat& points);

Mat points_matrix(const std::vector<Point>& pts, int dim);

/// Binary checkpoint: header (widths, activation, rectifier, seed) + theta.
void save_checkpoint(const std::string& path, const MLP& net, std::uint64_t seed);
MLP load_checkpoint(const std::string& path, std::uint64_t* seed_out = nullptr);

/// ReLU network of widths (1, 3N, N, 1) whose value at lattice[active[i]]
/// is values[i] and 0 at every other lattice point. `lattice` must be
/// strictly increasing; hats span adjacent lattice neighbours.
MLP relu_interpolant_1d(const std::vector<double>& lattice, const std::vector<int>& active, const Vec& values);

} // namespace feinn
