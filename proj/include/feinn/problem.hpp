#pragma once

#include "feinn/types.hpp"

#include <functional>
#include <string>
#include <vector>

namespace feinn {

using ScalarField = std::function<double(double, double)>;
using VectorField = std::function<Point(double, double)>;

/// Convection-diffusion-reaction data:
///   -div(kappa grad u) + (beta . grad) u + sigma u = f   in the domain,
///   u = g on Dirichlet-tagged facets, kappa n . grad u = eta on Neumann ones.
/// Null fields mean identically zero (kappa defaults to one).
struct ProblemDefinition {
  ScalarField kappa;
  VectorField beta;
  ScalarField sigma;
  ScalarField source;
  ScalarField dirichlet;
  ScalarField neumann;
  std::vector<std::string> dirichlet_tags;
  std::vector<std::string> neumann_tags;
};

} // namespace feinn
