#include "feinn/quadrature.hpp"

#include <cmath>

namespace feinn {

void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  nodes.assign(static_cast<std::size_t>(n), 0.0);
  weights.assign(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      // Legendre recurrence for P_n and P'_n at x.
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    nodes[static_cast<std::size_t>(i)] = -x;
    nodes[static_cast<std::size_t>(n - 1 - i)] = x;
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    weights[static_cast<std::size_t>(i)] = w;
    weights[static_cast<std::size_t>(n - 1 - i)] = w;
  }
}

namespace {

QuadratureRule segment_rule(int degree) {
  const int n = degree / 2 + 1;
  std::vector<double> x, w;
  gauss_legendre(n, x, w);
  QuadratureRule rule;
  rule.degree = 2 * n - 1;
  for (int i = 0; i < n; ++i) {
    rule.points.push_back({x[static_cast<std::size_t>(i)], 0.0});
    rule.weights.push_back(w[static_cast<std::size_t>(i)]);
  }
  return rule;
}

QuadratureRule tri_symmetric(int degree) {
  QuadratureRule rule;
  auto add = [&rule](double a, double b, double w) {
    rule.points.push_back({a, b});
    rule.weights.push_back(w);
  };
  auto add3 = [&](double a, double w) {
    add(a, a, w);
    add(1.0 - 2.0 * a, a, w);
    add(a, 1.0 - 2.0 * a, w);
  };
  if (degree <= 1) {
    rule.degree = 1;
    add(1.0 / 3.0, 1.0 / 3.0, 0.5);
  } else if (degree == 2) {
    rule.degree = 2;
    add3(1.0 / 6.0, 1.0 / 6.0);
  } else if (degree <= 4) {
    rule.degree = 4;
    add3(0.445948490915965, 0.5 * 0.223381589678011);
    add3(0.091576213509771, 0.5 * 0.109951743655322);
  } else {
    rule.degree = 5;
    add(1.0 / 3.0, 1.0 / 3.0, 0.5 * 0.225);
    add3(0.470142064105115, 0.5 * 0.132394152788506);
    add3(0.101286507323456, 0.5 * 0.125939180544827);
  }
  return rule;
}

// Collapsed square-to-triangle rule: x = u, y = v (1 - u) with the extra
// (1 - u) Jacobian absorbed into the weights. Exact for any degree with
// enough Gauss points, all weights positive.
QuadratureRule tri_collapsed(int degree) {
  const int nu = (degree + 2) / 2 + 1;
  const int nv = (degree + 1) / 2 + 1;
  std::vector<double> xu, wu, xv, wv;
  gauss_legendre(nu, xu, wu);
  gauss_legendre(nv, xv, wv);
  QuadratureRule rule;
  rule.degree = degree;
  for (int i = 0; i < nu; ++i)
    for (int j = 0; j < nv; ++j) {
      const double u = 0.5 * (xu[static_cast<std::size_t>(i)] + 1.0);
      const double v = 0.5 * (xv[static_cast<std::size_t>(j)] + 1.0);
      rule.points.push_back({u, v * (1.0 - u)});
      rule.weights.push_back(0.25 * wu[static_cast<std::size_t>(i)] * wv[static_cast<std::size_t>(j)] * (1.0 - u));
    }
  return rule;
}

} // namespace

QuadratureRule gauss_rule(CellShape shape, int degree) {
  if (degree < 1) throw std::invalid_argument("quadrature degree must be >= 1");
  switch (shape) {
    case CellShape::Segment:
      return segment_rule(degree);
    case CellShape::Quad: {
      const QuadratureRule line = segment_rule(degree);
      QuadratureRule rule;
      rule.degree = line.degree;
      for (std::size_t j = 0; j < line.size(); ++j)
        for (std::size_t i = 0; i < line.size(); ++i) {
          rule.points.push_back({line.points[i][0], line.points[j][0]});
          rule.weights.push_back(line.weights[i] * line.weights[j]);
        }
      return rule;
    }
    case CellShape::Tri: {
      constexpr int max_degree = 40;
      if (degree > max_degree)
        throw std::invalid_argument("triangle quadrature supports degree <= " + std::to_string(max_degree));
      return degree <= 5 ? tri_symmetric(degree) : tri_collapsed(degree);
    }
  }
  throw std::invalid_argument("unknown cell shape");
}

} // namespace feinn
