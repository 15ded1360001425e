#include "feinn/bfgs.hpp"

#include "feinn/parallel.hpp"

#include <cmath>
#include <deque>
#include <limits>
#include <optional>

namespace feinn {

namespace {

struct ProbePoint {
  double alpha = 0.0;
  double f = 0.0;
  double df = 0.0; // directional derivative
  Vec x, g;
};

class LineObjective {
public:
  LineObjective(const ValueGrad& fg, const Vec& x0, const Vec& d) : fg_(fg), x0_(x0), d_(d) {}

  ProbePoint eval(double alpha) {
    ProbePoint p;
    p.alpha = alpha;
    p.x = x0_ + alpha * d_;
    p.g.resize(x0_.size());
    p.f = fg_(p.x, p.g);
    p.df = p.g.dot(d_);
    return p;
  }

private:
  const ValueGrad& fg_;
  const Vec& x0_;
  const Vec& d_;
};

// Minimizer of the cubic Hermite interpolant through (a, fa, da), (b, fb, db);
// may lie outside [a, b], NaN when the model has no interior minimum.
double cubic_vertex(double a, double fa, double da, double b, double fb, double db) {
  const double d1 = da + db - 3.0 * (fa - fb) / (a - b);
  const double disc = d1 * d1 - da * db;
  if (disc < 0.0) return std::numeric_limits<double>::quiet_NaN();
  const double d2 = std::copysign(std::sqrt(disc), b - a);
  return b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
}

// Safeguarded interpolation step for zoom: bisection when the cubic leaves
// the bracket interior.
double cubic_step(double a, double fa, double da, double b, double fb, double db) {
  const double t = cubic_vertex(a, fa, da, b, fb, db);
  const double lo = std::min(a, b), hi = std::max(a, b);
  const double margin = 0.1 * (hi - lo);
  if (std::isfinite(t) && t > lo + margin && t < hi - margin) return t;
  return 0.5 * (a + b);
}

// Strong-Wolfe line search (bracket + zoom). Returns the accepted point or
// nullopt on failure; `best` tracks the lowest finite value probed.
std::optional<ProbePoint> wolfe_search(LineObjective& line, const ProbePoint& at_zero, double alpha_init,
                                       const BfgsOptions& opts, ProbePoint& best) {
  const double f0 = at_zero.f;
  const double df0 = at_zero.df;
  auto armijo = [&](const ProbePoint& p) { return p.f <= f0 + opts.c1 * p.alpha * df0; };
  // Weak Wolfe: the slope must have risen enough. Unlike the strong form it
  // stays attainable across l1 kinks, where the directional derivative jumps;
  // accepted points always carry positive curvature for the update.
  auto curvature = [&](const ProbePoint& p) { return p.df >= opts.c2 * df0; };
  auto note_best = [&](const ProbePoint& p) {
    if (std::isfinite(p.f) && p.f < best.f) best = p;
  };

  // One Hermite refinement of an already acceptable point: exact on quadratic
  // sections, otherwise kept only when it improves and stays acceptable.
  auto polish = [&](ProbePoint p) -> ProbePoint {
    const double t = cubic_vertex(0.0, f0, df0, p.alpha, p.f, p.df);
    if (!std::isfinite(t) || t <= 1e-14 || t > 4.0 * p.alpha || std::abs(t - p.alpha) < 1e-12 * p.alpha) return p;
    ProbePoint q = line.eval(t);
    note_best(q);
    if (std::isfinite(q.f) && q.f <= p.f && armijo(q) && curvature(q)) return q;
    return p;
  };

  auto zoom = [&](ProbePoint lo, ProbePoint hi) -> std::optional<ProbePoint> {
    for (int i = 0; i < opts.max_line_search; ++i) {
      const double a = cubic_step(lo.alpha, lo.f, lo.df, hi.alpha, hi.f, hi.df);
      ProbePoint p = line.eval(a);
      note_best(p);
      if (!std::isfinite(p.f) || !armijo(p) || p.f >= lo.f) {
        hi = std::move(p);
        continue;
      }
      if (curvature(p)) return polish(std::move(p));
      if (p.df * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
      lo = std::move(p);
      if (std::abs(hi.alpha - lo.alpha) < 1e-16 * std::max(1.0, std::abs(lo.alpha))) break;
    }
    // The curvature condition can be unattainable across an l1 kink; the
    // bracketing Armijo point is still a sound decrease step.
    if (lo.alpha > 0.0 && armijo(lo)) return lo;
    return std::nullopt;
  };

  ProbePoint prev = at_zero;
  double alpha = alpha_init;
  for (int i = 0; i < opts.max_line_search; ++i) {
    ProbePoint p = line.eval(alpha);
    note_best(p);
    if (!std::isfinite(p.f)) {
      // Overshot into an invalid region; shrink toward the last good point.
      alpha = 0.5 * (prev.alpha + alpha);
      continue;
    }
    if (!armijo(p) || (i > 0 && p.f >= prev.f)) return zoom(prev, p);
    if (curvature(p)) return polish(std::move(p));
    if (p.df >= 0.0) return zoom(p, prev);
    prev = std::move(p);
    alpha *= 2.0;
  }
  if (prev.alpha > 0.0 && armijo(prev)) return prev;
  return std::nullopt;
}

// Dense symmetric apply and fused rank-2 update, row-parallel (each row is
// written by exactly one worker, so results are thread-count independent).
// Row-major storage keeps both passes on contiguous memory.
using HessianMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Vec dense_apply(const HessianMat& H, const Vec& g) {
  Vec out(g.size());
  parallel_for(g.size(), [&](std::int64_t lo, std::int64_t hi) {
    out.segment(lo, hi - lo).noalias() = H.middleRows(lo, hi - lo) * g;
  });
  return out;
}

void dense_rank2(HessianMat& H, const Vec& s, const Vec& u) {
  parallel_for(s.size(), [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t i = lo; i < hi; ++i)
      H.row(i).noalias() += s(i) * u.transpose() + u(i) * s.transpose();
  });
}

} // namespace

BfgsResult bfgs_minimize(const ValueGrad& fg, const Vec& x0, const BfgsOptions& opts, const IterCallback& callback) {
  const Eigen::Index n = x0.size();
  BfgsResult res;
  res.x = x0;
  res.grad.resize(n);
  res.f = fg(res.x, res.grad);
  res.history.push_back(res.f);

  const bool limited = opts.lbfgs_memory > 0;
  HessianMat H;
  if (!limited) H = HessianMat::Identity(n, n);
  std::deque<std::pair<Vec, Vec>> memory; // (s, y) pairs for limited mode
  double gamma = 1.0;
  bool scaled = false;

  ProbePoint best;
  best.alpha = 0.0;
  best.f = res.f;
  best.x = res.x;
  best.g = res.grad;

  for (int iter = 1; iter <= opts.max_iters; ++iter) {
    if (res.grad.lpNorm<Eigen::Infinity>() <= opts.grad_tol) {
      res.status = BfgsStatus::Converged;
      return res;
    }

    Vec d;
    if (limited) {
      // Two-loop recursion.
      Vec q = res.grad;
      std::vector<double> alpha_i(memory.size());
      for (std::size_t i = memory.size(); i-- > 0;) {
        const auto& [s, y] = memory[i];
        alpha_i[i] = s.dot(q) / y.dot(s);
        q -= alpha_i[i] * y;
      }
      q *= gamma;
      for (std::size_t i = 0; i < memory.size(); ++i) {
        const auto& [s, y] = memory[i];
        const double beta = y.dot(q) / y.dot(s);
        q += (alpha_i[i] - beta) * s;
      }
      d = -q;
    } else {
      d = -dense_apply(H, res.grad);
    }
    double dg = d.dot(res.grad);
    if (!(dg < 0.0)) {
      // Not a descent direction: reset curvature information.
      if (!limited)
        H = HessianMat::Identity(n, n);
      else
        memory.clear();
      scaled = false;
      d = -res.grad;
      dg = d.dot(res.grad);
      if (!(dg < 0.0)) {
        res.status = BfgsStatus::Converged; // gradient numerically zero
        return res;
      }
    }

    auto try_direction = [&](const Vec& dir, double dirg, double alpha0) -> std::optional<ProbePoint> {
      LineObjective line(fg, res.x, dir);
      ProbePoint at_zero;
      at_zero.alpha = 0.0;
      at_zero.f = res.f;
      at_zero.df = dirg;
      best.alpha = 0.0;
      best.f = res.f;
      best.x = res.x;
      best.g = res.grad;
      auto found = wolfe_search(line, at_zero, alpha0, opts, best);
      // No strong-Wolfe point (common near l1 kinks): fall back to the best
      // simple-decrease probe; the curvature guard below protects the update.
      if (!found && best.f < res.f && best.alpha > 0.0) found = best;
      return found;
    };

    const double alpha_init = (iter == 1 && !scaled) ? std::min(1.0, 1.0 / std::max(1e-12, res.grad.lpNorm<1>())) : 1.0;
    auto accepted = try_direction(d, dg, alpha_init);
    if (!accepted && !limited && !H.isIdentity(0.0)) {
      // Stale curvature can leave the quasi-Newton direction useless near a
      // kink; restart from scratch along steepest descent before giving up.
      H = HessianMat::Identity(n, n);
      scaled = false;
      d = -res.grad;
      accepted = try_direction(d, d.dot(res.grad), std::min(1.0, 1.0 / std::max(1e-12, res.grad.lpNorm<1>())));
    } else if (!accepted && limited && !memory.empty()) {
      memory.clear();
      scaled = false;
      d = -res.grad;
      accepted = try_direction(d, d.dot(res.grad), std::min(1.0, 1.0 / std::max(1e-12, res.grad.lpNorm<1>())));
    }
    if (!accepted) {
      res.status = BfgsStatus::LineSearchFailed;
      return res;
    }

    const Vec s = accepted->x - res.x;
    const Vec y = accepted->g - res.grad;
    res.x = accepted->x;
    res.f = accepted->f;
    res.grad = accepted->g;
    res.history.push_back(res.f);
    res.iterations = iter;
    if (callback) callback(iter, res.x, res.f);

    const double sy = s.dot(y);
    if (sy > opts.curvature_skip * s.norm() * y.norm()) {
      if (limited) {
        memory.emplace_back(s, y);
        if (static_cast<int>(memory.size()) > opts.lbfgs_memory) memory.pop_front();
        gamma = sy / y.squaredNorm();
      } else {
        if (!scaled) {
          // One-time identity scaling before the first update.
          if (opts.scale_first_update) H *= sy / y.squaredNorm();
          scaled = true;
        }
        const double rho = 1.0 / sy;
        const Vec Hy = dense_apply(H, y);
        const double yHy = y.dot(Hy);
        const Vec u = -rho * Hy + 0.5 * (rho * rho * yHy + rho) * s;
        dense_rank2(H, s, u);
      }
    }
  }
  res.status = BfgsStatus::IterationLimit;
  return res;
}

BfgsResult bfgs_minimize(const std::function<double(const Vec&)>& f, const std::function<Vec(const Vec&)>& grad,
                         const Vec& x0, const BfgsOptions& opts) {
  return bfgs_minimize(
      [&](const Vec& x, Vec& g) {
        g = grad(x);
        return f(x);
      },
      x0, opts);
}

} // namespace feinn
