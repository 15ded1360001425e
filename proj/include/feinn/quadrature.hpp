#pragma once

#include "feinn/mesh.hpp"
#include "feinn/types.hpp"

#include <vector>

namespace feinn {

struct QuadratureRule {
  std::vector<Point> points; // reference-cell coordinates
  std::vector<double> weights;
  int degree = 0; // declared polynomial exactness

  std::size_t size() const { return points.size(); }
};

/// Rule exact for polynomials up to `degree` on the reference cell:
/// Gauss-Legendre (tensorized on quads) for segments/quads; symmetric rules
/// for triangles up to degree 5, a collapsed tensor rule beyond.
QuadratureRule gauss_rule(CellShape shape, int degree);

/// Gauss-Legendre nodes/weights on [-1, 1].
void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights);

} // namespace feinn
