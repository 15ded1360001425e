#include "feinn/neural.hpp"

#include "feinn/parallel.hpp"
#include "feinn/rng.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace feinn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstWMap = Eigen::Map<const RowMat>;
using ConstBMap = Eigen::Map<const Vec>;

struct LayerView {
  ConstWMap W;
  ConstBMap b;
};

std::vector<LayerView> layer_views(const MLPArchitecture& arch, const Vec& theta) {
  std::vector<LayerView> views;
  const double* p = theta.data();
  for (int k = 1; k <= arch.layers(); ++k) {
    const int rows = arch.widths[static_cast<std::size_t>(k)];
    const int cols = arch.widths[static_cast<std::size_t>(k - 1)];
    views.push_back({ConstWMap(p, rows, cols), ConstBMap(p + rows * cols, rows)});
    p += rows * cols + rows;
  }
  return views;
}

void apply_activation(Activation act, Mat& z) {
  switch (act) {
    case Activation::Tanh:
      z = z.array().tanh();
      break;
    case Activation::Softplus:
      // Overflow-safe softplus: max(x, 0) + log1p(exp(-|x|)).
      z = z.array().unaryExpr([](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); });
      break;
    case Activation::Relu:
      z = z.array().max(0.0);
      break;
  }
}

// Derivative of the activation expressed through its pre-activation input.
Mat activation_derivative(Activation act, const Mat& z_pre) {
  switch (act) {
    case Activation::Tanh: {
      Mat t = z_pre.array().tanh();
      return (1.0 - t.array().square()).matrix();
    }
    case Activation::Softplus:
      return z_pre.array().unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); }).matrix();
    case Activation::Relu:
      return z_pre.array().unaryExpr([](double x) { return x > 0.0 ? 1.0 : 0.0; }).matrix();
  }
  throw std::invalid_argument("unknown activation");
}

double rectify(Rectifier r, double eps, double x) {
  switch (r) {
    case Rectifier::None: return x;
    case Rectifier::AbsPlusEps: return std::abs(x) + eps;
    case Rectifier::SquarePlusEps: return x * x + eps;
  }
  return x;
}

double rectify_derivative(Rectifier r, double x) {
  switch (r) {
    case Rectifier::None: return 1.0;
    case Rectifier::AbsPlusEps: return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
    case Rectifier::SquarePlusEps: return 2.0 * x;
  }
  return 1.0;
}

} // namespace

Eigen::Index MLPArchitecture::param_count() const {
  Eigen::Index n = 0;
  for (int k = 1; k <= layers(); ++k)
    n += static_cast<Eigen::Index>(widths[static_cast<std::size_t>(k)]) * widths[static_cast<std::size_t>(k - 1)] +
         widths[static_cast<std::size_t>(k)];
  return n;
}

void MLPArchitecture::check() const {
  if (widths.size() < 2) throw std::invalid_argument("network needs at least one affine map");
  for (int w : widths)
    if (w <= 0) throw std::invalid_argument("layer widths must be positive");
}

Vec glorot_init(const MLPArchitecture& arch, std::uint64_t seed) {
  arch.check();
  Rng rng(seed);
  Vec theta = Vec::Zero(arch.param_count());
  double* p = theta.data();
  for (int k = 1; k <= arch.layers(); ++k) {
    const int rows = arch.widths[static_cast<std::size_t>(k)];
    const int cols = arch.widths[static_cast<std::size_t>(k - 1)];
    const double bound = std::sqrt(6.0 / (rows + cols));
    for (int i = 0; i < rows * cols; ++i) *p++ = rng.uniform(-bound, bound);
    p += rows; // biases stay zero
  }
  return theta;
}

Mat points_matrix(const std::vector<Point>& pts, int dim) {
  Mat m(static_cast<Eigen::Index>(pts.size()), dim);
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (int d = 0; d < dim; ++d) m(static_cast<Eigen::Index>(i), d) = pts[i][static_cast<std::size_t>(d)];
  return m;
}

Vec forward(const MLPArchitecture& arch, const Vec& theta, const Mat& points) {
  arch.check();
  if (points.cols() != arch.input_dim()) throw std::invalid_argument("point dimension does not match network input width");
  if (theta.size() != arch.param_count()) throw std::invalid_argument("parameter vector has wrong length");
  const auto views = layer_views(arch, theta);
  const Eigen::Index n = points.rows();
  Vec out(n);
  parallel_for(n, [&](std::int64_t lo, std::int64_t hi) {
    Mat a = points.middleRows(lo, hi - lo);
    for (int k = 0; k < arch.layers(); ++k) {
      Mat z = a * views[static_cast<std::size_t>(k)].W.transpose();
      z.rowwise() += views[static_cast<std::size_t>(k)].b.transpose();
      if (k + 1 < arch.layers()) apply_activation(arch.activation, z);
      a = std::move(z);
    }
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      out(lo + i) = rectify(arch.rectifier, arch.rectifier_eps, a(i, 0));
  });
  return out;
}

std::vector<Mat> forward_activations(const MLPArchitecture& arch, const Vec& theta, const Mat& points) {
  arch.check();
  const auto views = layer_views(arch, theta);
  std::vector<Mat> acts;
  Mat a = points;
  for (int k = 0; k < arch.layers(); ++k) {
    Mat z = a * views[static_cast<std::size_t>(k)].W.transpose();
    z.rowwise() += views[static_cast<std::size_t>(k)].b.transpose();
    if (k + 1 < arch.layers()) apply_activation(arch.activation, z);
    acts.push_back(z);
    a = acts.back();
  }
  return acts;
}

Mat grad_input(const MLPArchitecture& arch, const Vec& theta, const Mat& points) {
  arch.check();
  if (points.cols() != arch.input_dim()) throw std::invalid_argument("point dimension does not match network input width");
  const auto views = layer_views(arch, theta);
  const int d = arch.input_dim();
  const Eigen::Index n = points.rows();
  Mat out(n, d);
  parallel_for(n, [&](std::int64_t lo, std::int64_t hi) {
    Mat a = points.middleRows(lo, hi - lo);
    std::vector<Mat> g(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j) {
      g[static_cast<std::size_t>(j)] = Mat::Zero(a.rows(), d);
      g[static_cast<std::size_t>(j)].col(j).setOnes();
    }
    Vec last(a.rows());
    for (int k = 0; k < arch.layers(); ++k) {
      Mat z = a * views[static_cast<std::size_t>(k)].W.transpose();
      z.rowwise() += views[static_cast<std::size_t>(k)].b.transpose();
      for (int j = 0; j < d; ++j)
        g[static_cast<std::size_t>(j)] = g[static_cast<std::size_t>(j)] * views[static_cast<std::size_t>(k)].W.transpose();
      if (k + 1 < arch.layers()) {
        const Mat dz = activation_derivative(arch.activation, z);
        for (int j = 0; j < d; ++j)
          g[static_cast<std::size_t>(j)] = g[static_cast<std::size_t>(j)].cwiseProduct(dz);
        apply_activation(arch.activation, z);
      } else {
        last = z.col(0);
      }
      a = std::move(z);
    }
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      const double rp = rectify_derivative(arch.rectifier, last(i));
      for (int j = 0; j < d; ++j) out(lo + i, j) = rp * g[static_cast<std::size_t>(j)](i, 0);
    }
  });
  return out;
}

Vec vjp_params(const MLPArchitecture& arch, const Vec& theta, const Mat& points, const Vec& cotangents) {
  arch.check();
  if (points.rows() != cotangents.size()) throw std::invalid_argument("cotangent count must match point count");
  const auto views = layer_views(arch, theta);
  const int L = arch.layers();
  Vec grad = Vec::Zero(theta.size());

  const int nthreads = std::max(1, thread_count());
  std::vector<Vec> partial(static_cast<std::size_t>(nthreads), Vec::Zero(theta.size()));
  std::atomic<int> slot{0};

  parallel_for(points.rows(), [&](std::int64_t lo, std::int64_t hi) {
    const int my = slot.fetch_add(1);
    Vec& acc = partial[static_cast<std::size_t>(my)];
    // Forward pass storing pre-activations.
    std::vector<Mat> pre(static_cast<std::size_t>(L));
    std::vector<Mat> act(static_cast<std::size_t>(L + 1));
    act[0] = points.middleRows(lo, hi - lo);
    for (int k = 0; k < L; ++k) {
      Mat z = act[static_cast<std::size_t>(k)] * views[static_cast<std::size_t>(k)].W.transpose();
      z.rowwise() += views[static_cast<std::size_t>(k)].b.transpose();
      pre[static_cast<std::size_t>(k)] = z;
      if (k + 1 < L) apply_activation(arch.activation, z);
      act[static_cast<std::size_t>(k + 1)] = std::move(z);
    }
    // Backward pass.
    Mat delta(hi - lo, 1);
    for (Eigen::Index i = 0; i < delta.rows(); ++i)
      delta(i, 0) = cotangents(lo + i) * rectify_derivative(arch.rectifier, pre[static_cast<std::size_t>(L - 1)](i, 0));
    double* gp = acc.data();
    std::vector<double*> layer_grad(static_cast<std::size_t>(L));
    for (int k = 0; k < L; ++k) {
      layer_grad[static_cast<std::size_t>(k)] = gp;
      gp += views[static_cast<std::size_t>(k)].W.size() + views[static_cast<std::size_t>(k)].b.size();
    }
    for (int k = L - 1; k >= 0; --k) {
      const auto& v = views[static_cast<std::size_t>(k)];
      Eigen::Map<RowMat> dW(layer_grad[static_cast<std::size_t>(k)], v.W.rows(), v.W.cols());
      Eigen::Map<Vec> db(layer_grad[static_cast<std::size_t>(k)] + v.W.size(), v.b.size());
      dW.noalias() += delta.transpose() * act[static_cast<std::size_t>(k)];
      db.noalias() += delta.colwise().sum().transpose();
      if (k > 0) {
        Mat next = delta * v.W;
        delta = next.cwiseProduct(activation_derivative(arch.activation, pre[static_cast<std::size_t>(k - 1)]));
      }
    }
  });
  for (const Vec& p : partial) grad += p;
  return grad;
}

void save_checkpoint(const std::string& path, const MLP& net, std::uint64_t seed) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  const char magic[8] = {'F', 'E', 'I', 'N', 'N', 'N', 'E', 'T'};
  out.write(magic, 8);
  auto put_u32 = [&out](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  put_u32(1u); // version
  put_u32(static_cast<std::uint32_t>(net.arch.widths.size()));
  for (int w : net.arch.widths) put_u32(static_cast<std::uint32_t>(w));
  put_u32(static_cast<std::uint32_t>(net.arch.activation));
  put_u32(static_cast<std::uint32_t>(net.arch.rectifier));
  out.write(reinterpret_cast<const char*>(&net.arch.rectifier_eps), 8);
  out.write(reinterpret_cast<const char*>(&seed), 8);
  const std::uint64_t count = static_cast<std::uint64_t>(net.theta.size());
  out.write(reinterpret_cast<const char*>(&count), 8);
  out.write(reinterpret_cast<const char*>(net.theta.data()), static_cast<std::streamsize>(count * 8));
  if (!out) throw IoError("short write to checkpoint: " + path);
}

MLP load_checkpoint(const std::string& path, std::uint64_t* seed_out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, "FEINNNET", 8) != 0) throw IoError("bad checkpoint magic: " + path);
  auto get_u32 = [&in, &path] {
    std::uint32_t v;
    in.read(reinterpret_cast<char*>(&v), 4);
    if (!in) throw IoError("truncated checkpoint: " + path);
    return v;
  };
  if (get_u32() != 1u) throw IoError("unsupported checkpoint version: " + path);
  MLP net;
  const std::uint32_t nw = get_u32();
  net.arch.widths.resize(nw);
  for (std::uint32_t i = 0; i < nw; ++i) net.arch.widths[i] = static_cast<int>(get_u32());
  net.arch.activation = static_cast<Activation>(get_u32());
  net.arch.rectifier = static_cast<Rectifier>(get_u32());
  in.read(reinterpret_cast<char*>(&net.arch.rectifier_eps), 8);
  std::uint64_t seed = 0, count = 0;
  in.read(reinterpret_cast<char*>(&seed), 8);
  in.read(reinterpret_cast<char*>(&count), 8);
  net.theta.resize(static_cast<Eigen::Index>(count));
  in.read(reinterpret_cast<char*>(net.theta.data()), static_cast<std::streamsize>(count * 8));
  if (!in) throw IoError("truncated checkpoint: " + path);
  net.arch.check();
  if (net.theta.size() != net.arch.param_count()) throw IoError("checkpoint parameter count mismatch: " + path);
  if (seed_out) *seed_out = seed;
  return net;
}

MLP relu_interpolant_1d(const std::vector<double>& lattice, const std::vector<int>& active, const Vec& values) {
  const int n = static_cast<int>(active.size());
  if (values.size() != n) throw std::invalid_argument("one value per active lattice point required");
  for (std::size_t i = 1; i < lattice.size(); ++i)
    if (!(lattice[i] > lattice[i - 1])) throw std::invalid_argument("lattice must be strictly increasing");

  MLP net;
  net.arch.widths = {1, 3 * n, n, 1};
  net.arch.activation = Activation::Relu;
  net.theta = Vec::Zero(net.arch.param_count());

  // Hat at lattice[j]: rises over [x_{j-1}, x_j], falls over [x_j, x_{j+1}];
  // boundary lattice points fall back to a mirrored neighbour spacing.
  auto neighbour = [&lattice](int j, int side) {
    const int m = static_cast<int>(lattice.size());
    if (side < 0) return j > 0 ? lattice[static_cast<std::size_t>(j - 1)] : 2.0 * lattice[0] - lattice[1];
    return j + 1 < m ? lattice[static_cast<std::size_t>(j + 1)]
                     : 2.0 * lattice[static_cast<std::size_t>(m - 1)] - lattice[static_cast<std::size_t>(m - 2)];
  };

  double* p = net.theta.data();
  double* W1 = p;                    // 3n x 1
  double* b1 = W1 + 3 * n;           // 3n
  double* W2 = b1 + 3 * n;           // n x 3n
  double* b2 = W2 + 3 * n * n;       // n
  double* W3 = b2 + n;               // 1 x n
  for (int i = 0; i < n; ++i) {
    const int j = active[static_cast<std::size_t>(i)];
    const double xm = neighbour(j, -1), xc = lattice[static_cast<std::size_t>(j)], xp = neighbour(j, +1);
    const double hl = xc - xm, hr = xp - xc;
    // ramp up, combined kink, ramp down
    W1[3 * i + 0] = 1.0 / hl;
    b1[3 * i + 0] = -xm / hl;
    W1[3 * i + 1] = 1.0 / hl + 1.0 / hr;
    b1[3 * i + 1] = -xc * (1.0 / hl + 1.0 / hr);
    W1[3 * i + 2] = 1.0 / hr;
    b1[3 * i + 2] = -xp / hr;
    W2[i * 3 * n + 3 * i + 0] = 1.0;
    W2[i * 3 * n + 3 * i + 1] = -1.0;
    W2[i * 3 * n + 3 * i + 2] = 1.0;
    (void)b2;
    W3[i] = values(i);
  }
  return net;
}

} // namespace feinn
