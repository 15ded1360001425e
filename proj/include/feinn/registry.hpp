#pragma once

#include "feinn/inverse.hpp"
#include "feinn/problem.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace feinn {

enum class GeometryKind : std::uint8_t { UnitSquare, AnnulusSector, Imported };
enum class ProblemClass : std::uint8_t { Forward, Inverse, Conduction };

/// A registered benchmark: coefficients, boundary data, the analytic solution
/// when one exists (with its gradient, for error evaluation), and the data
/// needed to stage inverse runs.
struct RegisteredProblem {
  std::string id;
  ProblemClass kind = ProblemClass::Forward;
  GeometryKind geometry = GeometryKind::UnitSquare;
  ProblemDefinition problem;

  ScalarField exact_u;
  VectorField exact_grad_u;
  ScalarField exact_kappa; // inverse-problem truth (same as problem.kappa)

  /// Distance function vanishing on the Dirichlet boundary, when one is
  /// available for the product-form variant.
  ScalarField distance;

  /// Axis-aligned box on which the plug-in residual check runs; shifted off
  /// any point where quadrature of the exact solution cannot converge.
  std::array<Point, 2> verification_box{{{0.0, 0.0}, {1.0, 1.0}}};

  // Inverse staging (inv_* problems).
  std::optional<std::array<Point, 2>> observation_box; // default box for partial observations
  bool observe_all_dofs = false;
};

std::vector<std::string> registry_ids();
RegisteredProblem problem_registry(const std::string& id);

/// Fully staged conduction instance: mesh, FEM-generated observations, truth
/// state, and the inverse configuration (paper-style plan left to the caller).
struct IhcpInstance {
  InverseConfig config;
  FEFunction truth;
  MeshPtr mesh;
};
IhcpInstance make_ihcp_instance(const std::array<int, 2>& counts, int observation_grid, const MLPArchitecture& state_arch,
                                std::uint64_t state_seed, const MLPArchitecture& eta_arch, std::uint64_t eta_seed);

} // namespace feinn
