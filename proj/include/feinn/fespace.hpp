#pragma once

#include "feinn/mesh.hpp"
#include "feinn/neural.hpp"
#include "feinn/types.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace feinn {

using ScalarField = std::function<double(double, double)>;

/// Lagrange basis on the reference cell with equispaced nodes.
struct ReferenceElement {
  CellShape shape;
  int order;
  std::vector<Point> nodes;

  int node_count() const { return static_cast<int>(nodes.size()); }
  /// Basis values (and reference gradients when grads != nullptr) at `ref`.
  void eval(const Point& ref, std::vector<double>& values, std::vector<Point>* grads = nullptr) const;

  static const ReferenceElement& get(CellShape shape, int order);
};

/// C0 Lagrangian space of order k with Dirichlet masking by boundary tag.
class FESpace {
public:
  MeshPtr mesh;
  int order = 1;
  std::vector<Point> dof_coords;
  std::vector<int> cell_dofs;        // flattened
  std::vector<int> cell_dof_offsets; // per cell start into cell_dofs
  std::vector<std::uint8_t> dirichlet_mask;
  std::vector<int> free_index; // dof -> compact free index or -1
  std::vector<int> free_dofs;  // compact free index -> dof
  std::vector<std::string> dirichlet_tags;

  int dof_count() const { return static_cast<int>(dof_coords.size()); }
  int free_count() const { return static_cast<int>(free_dofs.size()); }
  int cell_dof_count(int c) const {
    return cell_dof_offsets[static_cast<std::size_t>(c) + 1] - cell_dof_offsets[static_cast<std::size_t>(c)];
  }
  const int* cell_dof_ptr(int c) const { return cell_dofs.data() + cell_dof_offsets[static_cast<std::size_t>(c)]; }
};

using FESpacePtr = std::shared_ptr<const FESpace>;

struct FEFunction {
  FESpacePtr space;
  Vec values;

  /// Value (and physical gradient) at a reference point of cell c.
  double eval_ref(int c, const Point& ref, Point* grad = nullptr) const;
};

FESpacePtr lagrangian_space(const MeshPtr& mesh, int order, const std::vector<std::string>& dirichlet_tags);

/// Nodal interpolation: values[i] = f(dof_coords[i]); zero_trace additionally
/// zeroes every Dirichlet-masked DOF.
FEFunction interpolate(const ScalarField& f, const FESpacePtr& space, bool zero_trace);

enum class OffsetMode { ZeroExtension, HarmonicExtension };

/// Carrier of the Dirichlet data g: nodal values of g on masked DOFs and
/// either zeros (ZeroExtension) or the discrete Laplace solve
/// (HarmonicExtension) on the interior.
FEFunction offset_function(const ScalarField& g, const FESpacePtr& space, OffsetMode mode);

/// Order-1 space on the factor-k_U refinement of the trial mesh (same mesh
/// for k_U = 1), Dirichlet tags copied; its zero-trace dimension equals the
/// trial space's free-DOF count.
FESpacePtr linearized_test_space(const FESpacePtr& trial);

/// Nodal interpolation of a network: batched evaluation at dof_coords.
FEFunction interpolate_nn(const MLP& net, const FESpacePtr& space, bool zero_trace);

/// ReLU construction that reproduces a 1D FE function's nodal values exactly:
/// interpolate_nn(relu_emulator(u), u.space, zero_trace) == u at free DOFs.
MLP relu_emulator(const FEFunction& target);

} // namespace feinn
