#include "feinn/fespace.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <unordered_map>

namespace feinn {

namespace {

// 1D Lagrange basis on equispaced nodes of [-1, 1].
struct Lagrange1D {
  std::vector<double> nodes;

  explicit Lagrange1D(int k) {
    for (int i = 0; i <= k; ++i) nodes.push_back(k == 0 ? 0.0 : -1.0 + 2.0 * i / k);
  }

  double value(int i, double x) const {
    double v = 1.0;
    for (std::size_t j = 0; j < nodes.size(); ++j) {
      if (static_cast<int>(j) == i) continue;
      v *= (x - nodes[j]) / (nodes[static_cast<std::size_t>(i)] - nodes[j]);
    }
    return v;
  }

  double derivative(int i, double x) const {
    double sum = 0.0;
    for (std::size_t m = 0; m < nodes.size(); ++m) {
      if (static_cast<int>(m) == i) continue;
      double prod = 1.0 / (nodes[static_cast<std::size_t>(i)] - nodes[m]);
      for (std::size_t j = 0; j < nodes.size(); ++j) {
        if (static_cast<int>(j) == i || j == m) continue;
        prod *= (x - nodes[j]) / (nodes[static_cast<std::size_t>(i)] - nodes[j]);
      }
      sum += prod;
    }
    return sum;
  }
};

// Silvester factor: P_m(t) = prod_{i<m} (t - i) / (m - i).
double silvester(int m, double t) {
  double v = 1.0;
  for (int i = 0; i < m; ++i) v *= (t - i) / (m - i);
  return v;
}

double silvester_derivative(int m, double t) {
  double sum = 0.0;
  for (int j = 0; j < m; ++j) {
    double prod = 1.0;
    for (int i = 0; i < m; ++i) prod *= (i == j ? 1.0 : (t - i)) / (m - i);
    sum += prod;
  }
  return sum;
}

// Lattice index lists per shape; order matches ReferenceElement::nodes.
struct NodeLattice {
  // For quad/segment: (a, b) grid indices. For tri: barycentric (a, b).
  std::vector<std::array<int, 2>> indices;
};

NodeLattice make_lattice(CellShape shape, int k) {
  NodeLattice lat;
  switch (shape) {
    case CellShape::Segment:
      for (int a = 0; a <= k; ++a) lat.indices.push_back({a, 0});
      break;
    case CellShape::Quad:
      for (int b = 0; b <= k; ++b)
        for (int a = 0; a <= k; ++a) lat.indices.push_back({a, b});
      break;
    case CellShape::Tri:
      for (int b = 0; b <= k; ++b)
        for (int a = 0; a + b <= k; ++a) lat.indices.push_back({a, b});
      break;
  }
  return lat;
}

} // namespace

void ReferenceElement::eval(const Point& ref, std::vector<double>& values, std::vector<Point>* grads) const {
  static std::mutex cache_mutex; // Lagrange1D construction is cheap; rebuild per call
  (void)cache_mutex;
  const NodeLattice lat = make_lattice(shape, order);
  const std::size_t n = lat.indices.size();
  values.resize(n);
  if (grads) grads->resize(n);
  if (shape == CellShape::Tri) {
    const double l1 = ref[0], l2 = ref[1], l0 = 1.0 - ref[0] - ref[1];
    const int k = order;
    for (std::size_t i = 0; i < n; ++i) {
      const int a = lat.indices[i][0], b = lat.indices[i][1], c = k - a - b;
      const double pa = silvester(a, k * l1), pb = silvester(b, k * l2), pc = silvester(c, k * l0);
      values[i] = pa * pb * pc;
      if (grads) {
        const double da = silvester_derivative(a, k * l1) * k;
        const double db = silvester_derivative(b, k * l2) * k;
        const double dc = silvester_derivative(c, k * l0) * k;
        (*grads)[i] = {da * pb * pc - pa * pb * dc, pa * db * pc - pa * pb * dc};
      }
    }
    return;
  }
  const Lagrange1D basis(order);
  if (shape == CellShape::Segment) {
    for (std::size_t i = 0; i < n; ++i) {
      const int a = lat.indices[i][0];
      values[i] = basis.value(a, ref[0]);
      if (grads) (*grads)[i] = {basis.derivative(a, ref[0]), 0.0};
    }
    return;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const int a = lat.indices[i][0], b = lat.indices[i][1];
    const double va = basis.value(a, ref[0]), vb = basis.value(b, ref[1]);
    values[i] = va * vb;
    if (grads) (*grads)[i] = {basis.derivative(a, ref[0]) * vb, va * basis.derivative(b, ref[1])};
  }
}

const ReferenceElement& ReferenceElement::get(CellShape shape, int order) {
  static std::mutex m;
  static std::map<std::pair<int, int>, std::unique_ptr<ReferenceElement>> cache;
  std::lock_guard<std::mutex> lock(m);
  auto& slot = cache[{static_cast<int>(shape), order}];
  if (!slot) {
    slot = std::make_unique<ReferenceElement>();
    slot->shape = shape;
    slot->order = order;
    const NodeLattice lat = make_lattice(shape, order);
    for (const auto& ab : lat.indices) {
      if (shape == CellShape::Tri)
        slot->nodes.push_back({static_cast<double>(ab[0]) / order, static_cast<double>(ab[1]) / order});
      else if (shape == CellShape::Segment)
        slot->nodes.push_back({order == 0 ? 0.0 : -1.0 + 2.0 * ab[0] / order, 0.0});
      else
        slot->nodes.push_back({-1.0 + 2.0 * ab[0] / order, -1.0 + 2.0 * ab[1] / order});
    }
  }
  return *slot;
}

double FEFunction::eval_ref(int c, const Point& ref, Point* grad) const {
  const Cell& cell = space->mesh->cells[static_cast<std::size_t>(c)];
  const ReferenceElement& el = ReferenceElement::get(cell.shape, space->order);
  std::vector<double> vals;
  std::vector<Point> grads;
  el.eval(ref, vals, grad ? &grads : nullptr);
  const int* dofs = space->cell_dof_ptr(c);
  double v = 0.0;
  Point gref{0.0, 0.0};
  for (int i = 0; i < space->cell_dof_count(c); ++i) {
    const double coef = values(dofs[i]);
    v += coef * vals[static_cast<std::size_t>(i)];
    if (grad) {
      gref[0] += coef * grads[static_cast<std::size_t>(i)][0];
      gref[1] += coef * grads[static_cast<std::size_t>(i)][1];
    }
  }
  if (grad) {
    const Mesh::MapPoint mp = space->mesh->map_cell(c, ref);
    if (space->mesh->dim == 1) {
      *grad = {gref[0] / mp.jac[0][0], 0.0};
    } else {
      // J^{-T} gref with J columns jac[0], jac[1].
      const double a = mp.jac[0][0], b = mp.jac[0][1], cj = mp.jac[1][0], d = mp.jac[1][1];
      const double inv = 1.0 / mp.det;
      (*grad)[0] = inv * (d * gref[0] - b * gref[1]);
      (*grad)[1] = inv * (-cj * gref[0] + a * gref[1]);
    }
  }
  return v;
}

namespace {

struct DofKeyMap {
  std::unordered_map<std::int64_t, int> vertex_keys;
  std::unordered_map<std::uint64_t, std::unordered_map<int, int>> edge_keys; // edge -> pos -> dof
  int count = 0;

  int vertex(int v) {
    auto [it, inserted] = vertex_keys.try_emplace(v, count);
    if (inserted) ++count;
    return it->second;
  }
  int edge(int va, int vb, int pos, int k) {
    if (va > vb) {
      std::swap(va, vb);
      pos = k - pos;
    }
    const std::uint64_t key = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(va)) << 32) |
                              static_cast<std::uint32_t>(vb);
    auto [it, inserted] = edge_keys[key].try_emplace(pos, count);
    if (inserted) ++count;
    return it->second;
  }
  int interior() { return count++; }
};

// Classification of a lattice node: owning topological entity.
struct NodeHome {
  enum Kind { Corner, Edge, Interior } kind = Interior;
  int corner = -1;      // local corner
  int edge = -1;        // local facet
  int edge_pos = 0;     // position along edge, counted from its first vertex
};

NodeHome classify(CellShape shape, int k, int a, int b) {
  NodeHome h;
  switch (shape) {
    case CellShape::Segment:
      if (a == 0) h = {NodeHome::Corner, 0, -1, 0};
      else if (a == k) h = {NodeHome::Corner, 1, -1, 0};
      else h = {NodeHome::Interior, -1, 0, a};
      return h;
    case CellShape::Quad: {
      const bool ba = a == 0 || a == k, bb = b == 0 || b == k;
      if (ba && bb) h = {NodeHome::Corner, (b == 0) ? (a == 0 ? 0 : 1) : (a == 0 ? 3 : 2), -1, 0};
      else if (b == 0) h = {NodeHome::Edge, -1, 0, a};
      else if (a == k) h = {NodeHome::Edge, -1, 1, b};
      else if (b == k) h = {NodeHome::Edge, -1, 2, k - a};
      else if (a == 0) h = {NodeHome::Edge, -1, 3, k - b};
      else h = {NodeHome::Interior, -1, -1, 0};
      return h;
    }
    case CellShape::Tri: {
      if (a == 0 && b == 0) h = {NodeHome::Corner, 0, -1, 0};
      else if (a == k) h = {NodeHome::Corner, 1, -1, 0};
      else if (b == k) h = {NodeHome::Corner, 2, -1, 0};
      else if (b == 0) h = {NodeHome::Edge, -1, 0, a};
      else if (a + b == k) h = {NodeHome::Edge, -1, 1, b};
      else if (a == 0) h = {NodeHome::Edge, -1, 2, k - b};
      else h = {NodeHome::Interior, -1, -1, 0};
      return h;
    }
  }
  return h;
}

std::array<int, 2> facet_endpoints(CellShape shape, int facet) {
  switch (shape) {
    case CellShape::Segment:
      return {facet, -1};
    case CellShape::Quad: {
      constexpr std::array<std::array<int, 2>, 4> e{{{0, 1}, {1, 2}, {2, 3}, {3, 0}}};
      return e[static_cast<std::size_t>(facet)];
    }
    case CellShape::Tri: {
      constexpr std::array<std::array<int, 2>, 3> e{{{0, 1}, {1, 2}, {2, 0}}};
      return e[static_cast<std::size_t>(facet)];
    }
  }
  throw std::invalid_argument("unknown cell shape");
}

} // namespace

FESpacePtr lagrangian_space(const MeshPtr& mesh, int order, const std::vector<std::string>& dirichlet_tags) {
  if (order < 1) throw std::invalid_argument("polynomial order must be >= 1");
  for (const std::string& t : dirichlet_tags)
    if (mesh->tag_id(t) < 0) throw std::invalid_argument("unknown boundary tag '" + t + "'");

  auto space = std::make_shared<FESpace>();
  space->mesh = mesh;
  space->order = order;
  space->dirichlet_tags = dirichlet_tags;

  DofKeyMap keys;
  const int k = order;
  space->cell_dof_offsets.push_back(0);
  std::vector<Point> coords;
  for (int c = 0; c < static_cast<int>(mesh->cells.size()); ++c) {
    const Cell& cell = mesh->cells[static_cast<std::size_t>(c)];
    const ReferenceElement& el = ReferenceElement::get(cell.shape, k);
    const NodeLattice lat = make_lattice(cell.shape, k);
    for (int i = 0; i < el.node_count(); ++i) {
      const auto [a, b] = lat.indices[static_cast<std::size_t>(i)];
      const NodeHome home = classify(cell.shape, k, a, b);
      int dof;
      if (home.kind == NodeHome::Corner) {
        dof = keys.vertex(cell.vertices[static_cast<std::size_t>(home.corner)]);
      } else if (home.kind == NodeHome::Edge && mesh->dim == 2) {
        const auto ev = facet_endpoints(cell.shape, home.edge);
        dof = keys.edge(cell.vertices[static_cast<std::size_t>(ev[0])], cell.vertices[static_cast<std::size_t>(ev[1])],
                        home.edge_pos, k);
      } else {
        dof = keys.interior();
      }
      space->cell_dofs.push_back(dof);
      if (dof >= static_cast<int>(coords.size())) coords.resize(static_cast<std::size_t>(dof) + 1);
      coords[static_cast<std::size_t>(dof)] = mesh->map_cell(c, el.nodes[static_cast<std::size_t>(i)]).x;
    }
    space->cell_dof_offsets.push_back(static_cast<int>(space->cell_dofs.size()));
  }
  space->dof_coords = std::move(coords);

  // Dirichlet mask: nodes lying on facets carrying a Dirichlet tag.
  space->dirichlet_mask.assign(space->dof_coords.size(), 0);
  std::vector<int> dirichlet_ids;
  for (const std::string& t : dirichlet_tags) dirichlet_ids.push_back(mesh->tag_id(t));
  for (const BoundaryFacet& f : mesh->boundary_facets) {
    if (std::find(dirichlet_ids.begin(), dirichlet_ids.end(), f.tag) == dirichlet_ids.end()) continue;
    const Cell& cell = mesh->cells[static_cast<std::size_t>(f.cell)];
    const NodeLattice lat = make_lattice(cell.shape, k);
    const int* dofs = space->cell_dof_ptr(f.cell);
    for (std::size_t i = 0; i < lat.indices.size(); ++i) {
      const auto [a, b] = lat.indices[i];
      bool on_facet = false;
      if (cell.shape == CellShape::Segment) {
        on_facet = (f.local_facet == 0 && a == 0) || (f.local_facet == 1 && a == k);
      } else if (cell.shape == CellShape::Quad) {
        on_facet = (f.local_facet == 0 && b == 0) || (f.local_facet == 1 && a == k) ||
                   (f.local_facet == 2 && b == k) || (f.local_facet == 3 && a == 0);
      } else {
        on_facet = (f.local_facet == 0 && b == 0) || (f.local_facet == 1 && a + b == k) ||
                   (f.local_facet == 2 && a == 0);
      }
      if (on_facet) space->dirichlet_mask[static_cast<std::size_t>(dofs[i])] = 1;
    }
  }

  space->free_index.assign(space->dof_coords.size(), -1);
  for (int d = 0; d < space->dof_count(); ++d) {
    if (!space->dirichlet_mask[static_cast<std::size_t>(d)]) {
      space->free_index[static_cast<std::size_t>(d)] = static_cast<int>(space->free_dofs.size());
      space->free_dofs.push_back(d);
    }
  }
  return space;
}

FEFunction interpolate(const ScalarField& f, const FESpacePtr& space, bool zero_trace) {
  FEFunction u;
  u.space = space;
  u.values = Vec::Zero(space->dof_count());
  for (int d = 0; d < space->dof_count(); ++d) {
    if (zero_trace && space->dirichlet_mask[static_cast<std::size_t>(d)]) continue;
    const Point& x = space->dof_coords[static_cast<std::size_t>(d)];
    const double v = f(x[0], x[1]);
    if (!std::isfinite(v))
      throw NumericError("interpolated function is not finite at node " + std::to_string(d) + " (" +
                         std::to_string(x[0]) + ", " + std::to_string(x[1]) + ")");
    u.values(d) = v;
  }
  return u;
}

FESpacePtr linearized_test_space(const FESpacePtr& trial) {
  if (trial->order == 1) return lagrangian_space(trial->mesh, 1, trial->dirichlet_tags);
  // Chain the refinement through prime factors; the composite result is the
  // same vertex lattice as one factor-k split but richer in lineage levels.
  MeshPtr mesh = trial->mesh;
  int k = trial->order;
  for (int p = 2; k > 1; ++p) {
    while (k % p == 0) {
      mesh = uniform_refine(mesh, p);
      k /= p;
    }
  }
  return lagrangian_space(mesh, 1, trial->dirichlet_tags);
}

FEFunction interpolate_nn(const MLP& net, const FESpacePtr& space, bool zero_trace) {
  if (net.arch.input_dim() != space->mesh->dim)
    throw std::invalid_argument("network input width does not match mesh dimension");
  FEFunction u;
  u.space = space;
  u.values = Vec::Zero(space->dof_count());
  const Vec out = forward(net.arch, net.theta, points_matrix(space->dof_coords, space->mesh->dim));
  for (int d = 0; d < space->dof_count(); ++d) {
    if (zero_trace && space->dirichlet_mask[static_cast<std::size_t>(d)]) continue;
    u.values(d) = out(d);
  }
  return u;
}

MLP relu_emulator(const FEFunction& target) {
  const FESpace& space = *target.space;
  if (space.mesh->dim != 1) throw std::invalid_argument("relu_emulator requires a 1D space");
  // Sort all nodes by coordinate; hats for free nodes vanish on the rest.
  std::vector<int> order_idx(static_cast<std::size_t>(space.dof_count()));
  for (int i = 0; i < space.dof_count(); ++i) order_idx[static_cast<std::size_t>(i)] = i;
  std::sort(order_idx.begin(), order_idx.end(),
            [&space](int a, int b) { return space.dof_coords[static_cast<std::size_t>(a)][0] < space.dof_coords[static_cast<std::size_t>(b)][0]; });
  std::vector<double> lattice;
  std::vector<int> active;
  Vec values(space.free_count());
  int nact = 0;
  for (std::size_t i = 0; i < order_idx.size(); ++i) {
    const int dof = order_idx[i];
    lattice.push_back(space.dof_coords[static_cast<std::size_t>(dof)][0]);
    if (!space.dirichlet_mask[static_cast<std::size_t>(dof)]) {
      active.push_back(static_cast<int>(i));
      values(nact++) = target.values(dof);
    }
  }
  return relu_interpolant_1d(lattice, active, values);
}

} // namespace feinn
