#include "feinn/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <unordered_map>

namespace feinn {

namespace {

std::uint64_t edge_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
}

// Local facet -> (first vertex, second vertex) in cell-local numbering.
std::array<int, 2> local_facet_vertices(CellShape shape, int facet) {
  switch (shape) {
    case CellShape::Segment:
      return facet == 0 ? std::array<int, 2>{0, -1} : std::array<int, 2>{1, -1};
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

// Which local facet of the reference cell contains both points, or -1.
int find_local_facet(CellShape shape, const Point& a, const Point& b) {
  constexpr double tol = 1e-12;
  auto on = [&](auto pred) { return pred(a) && pred(b); };
  switch (shape) {
    case CellShape::Segment:
      if (std::abs(a[0] + 1.0) < tol) return 0;
      if (std::abs(a[0] - 1.0) < tol) return 1;
      return -1;
    case CellShape::Quad:
      if (on([&](const Point& p) { return std::abs(p[1] + 1.0) < tol; })) return 0;
      if (on([&](const Point& p) { return std::abs(p[0] - 1.0) < tol; })) return 1;
      if (on([&](const Point& p) { return std::abs(p[1] - 1.0) < tol; })) return 2;
      if (on([&](const Point& p) { return std::abs(p[0] + 1.0) < tol; })) return 3;
      return -1;
    case CellShape::Tri:
      if (on([&](const Point& p) { return std::abs(p[1]) < tol; })) return 0;
      if (on([&](const Point& p) { return std::abs(p[0] + p[1] - 1.0) < tol; })) return 1;
      if (on([&](const Point& p) { return std::abs(p[0]) < tol; })) return 2;
      return -1;
  }
  return -1;
}

struct EdgeUse {
  int cell = -1;
  int local_facet = -1;
  int count = 0;
};

std::unordered_map<std::uint64_t, EdgeUse> boundary_edge_map(const Mesh& mesh) {
  std::unordered_map<std::uint64_t, EdgeUse> edges;
  for (int c = 0; c < static_cast<int>(mesh.cells.size()); ++c) {
    const Cell& cell = mesh.cells[static_cast<std::size_t>(c)];
    const int nf = cell_facet_count(cell.shape);
    for (int f = 0; f < nf; ++f) {
      const auto lv = local_facet_vertices(cell.shape, f);
      std::uint64_t key;
      if (mesh.dim == 1) {
        key = edge_key(cell.vertices[static_cast<std::size_t>(lv[0])], -1);
      } else {
        key = edge_key(cell.vertices[static_cast<std::size_t>(lv[0])], cell.vertices[static_cast<std::size_t>(lv[1])]);
      }
      auto& use = edges[key];
      if (use.count == 0) {
        use.cell = c;
        use.local_facet = f;
      }
      use.count += 1;
    }
  }
  for (auto it = edges.begin(); it != edges.end();) {
    it = it->second.count == 1 ? std::next(it) : edges.erase(it);
  }
  return edges;
}

// Resolves cell/local_facet ownership for externally supplied facets and
// checks that tags cover the boundary exactly once.
void attach_boundary_facets(Mesh& mesh) {
  auto edges = boundary_edge_map(mesh);
  std::unordered_map<std::uint64_t, int> seen;
  for (auto& facet : mesh.boundary_facets) {
    const std::uint64_t key =
        mesh.dim == 1 ? edge_key(facet.vertices[0], -1) : edge_key(facet.vertices[0], facet.vertices[1]);
    auto it = edges.find(key);
    if (it == edges.end()) throw std::invalid_argument("boundary facet does not match a boundary edge of the cells");
    if (++seen[key] > 1) throw std::invalid_argument("boundary facet tagged more than once");
    facet.cell = it->second.cell;
    facet.local_facet = it->second.local_facet;
  }
  if (seen.size() != edges.size())
    throw std::invalid_argument("boundary tags do not cover the whole boundary");
}

Point reference_vertex(CellShape shape, int local) {
  switch (shape) {
    case CellShape::Segment:
      return {local == 0 ? -1.0 : 1.0, 0.0};
    case CellShape::Quad: {
      constexpr std::array<Point, 4> v{{{-1.0, -1.0}, {1.0, -1.0}, {1.0, 1.0}, {-1.0, 1.0}}};
      return v[static_cast<std::size_t>(local)];
    }
    case CellShape::Tri: {
      constexpr std::array<Point, 3> v{{{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}}};
      return v[static_cast<std::size_t>(local)];
    }
  }
  throw std::invalid_argument("unknown cell shape");
}

} // namespace

int cell_vertex_count(CellShape shape) {
  switch (shape) {
    case CellShape::Segment: return 2;
    case CellShape::Quad: return 4;
    case CellShape::Tri: return 3;
  }
  throw std::invalid_argument("unknown cell shape");
}

int cell_facet_count(CellShape shape) {
  switch (shape) {
    case CellShape::Segment: return 2;
    case CellShape::Quad: return 4;
    case CellShape::Tri: return 3;
  }
  throw std::invalid_argument("unknown cell shape");
}

double reference_measure(CellShape shape) {
  switch (shape) {
    case CellShape::Segment: return 2.0;
    case CellShape::Quad: return 4.0;
    case CellShape::Tri: return 0.5;
  }
  throw std::invalid_argument("unknown cell shape");
}

int Mesh::tag_id(const std::string& name) const {
  for (int i = 0; i < static_cast<int>(boundary_tag_names.size()); ++i)
    if (boundary_tag_names[static_cast<std::size_t>(i)] == name) return i;
  return -1;
}

Mesh::MapPoint Mesh::map_cell(int c, const Point& ref) const {
  const Cell& cell = cells[static_cast<std::size_t>(c)];
  MapPoint out;
  const auto& vx = vertices;
  switch (cell.shape) {
    case CellShape::Segment: {
      const Point& a = vx[static_cast<std::size_t>(cell.vertices[0])];
      const Point& b = vx[static_cast<std::size_t>(cell.vertices[1])];
      const double t = 0.5 * (ref[0] + 1.0);
      out.x = {a[0] + t * (b[0] - a[0]), 0.0};
      out.jac[0] = {0.5 * (b[0] - a[0]), 0.0};
      out.jac[1] = {0.0, 1.0};
      out.det = out.jac[0][0];
      return out;
    }
    case CellShape::Tri: {
      const Point& a = vx[static_cast<std::size_t>(cell.vertices[0])];
      const Point& b = vx[static_cast<std::size_t>(cell.vertices[1])];
      const Point& d = vx[static_cast<std::size_t>(cell.vertices[2])];
      out.x = {a[0] + ref[0] * (b[0] - a[0]) + ref[1] * (d[0] - a[0]),
               a[1] + ref[0] * (b[1] - a[1]) + ref[1] * (d[1] - a[1])};
      out.jac[0] = {b[0] - a[0], b[1] - a[1]};
      out.jac[1] = {d[0] - a[0], d[1] - a[1]};
      out.det = out.jac[0][0] * out.jac[1][1] - out.jac[0][1] * out.jac[1][0];
      return out;
    }
    case CellShape::Quad: {
      const double xi = ref[0], eta = ref[1];
      const std::array<double, 4> n{0.25 * (1 - xi) * (1 - eta), 0.25 * (1 + xi) * (1 - eta),
                                    0.25 * (1 + xi) * (1 + eta), 0.25 * (1 - xi) * (1 + eta)};
      const std::array<double, 4> dxi{-0.25 * (1 - eta), 0.25 * (1 - eta), 0.25 * (1 + eta), -0.25 * (1 + eta)};
      const std::array<double, 4> deta{-0.25 * (1 - xi), -0.25 * (1 + xi), 0.25 * (1 + xi), 0.25 * (1 - xi)};
      out.x = {0.0, 0.0};
      out.jac = {{{0.0, 0.0}, {0.0, 0.0}}};
      for (int i = 0; i < 4; ++i) {
        const Point& v = vx[static_cast<std::size_t>(cell.vertices[static_cast<std::size_t>(i)])];
        out.x[0] += n[static_cast<std::size_t>(i)] * v[0];
        out.x[1] += n[static_cast<std::size_t>(i)] * v[1];
        out.jac[0][0] += dxi[static_cast<std::size_t>(i)] * v[0];
        out.jac[0][1] += dxi[static_cast<std::size_t>(i)] * v[1];
        out.jac[1][0] += deta[static_cast<std::size_t>(i)] * v[0];
        out.jac[1][1] += deta[static_cast<std::size_t>(i)] * v[1];
      }
      out.det = out.jac[0][0] * out.jac[1][1] - out.jac[0][1] * out.jac[1][0];
      return out;
    }
  }
  throw std::invalid_argument("unknown cell shape");
}

std::pair<int, Point> Mesh::to_ancestor(const Mesh& ancestor, int cell, const Point& ref) const {
  const Mesh* m = this;
  Point p = ref;
  int c = cell;
  while (m != &ancestor) {
    if (!m->parent_mesh) throw std::invalid_argument("mesh is not a descendant of the requested ancestor");
    const ParentLink& link = m->parent_links[static_cast<std::size_t>(c)];
    p = link.map(p);
    c = link.parent;
    m = m->parent_mesh.get();
  }
  return {c, p};
}

double Mesh::cell_measure(int c) const {
  // 3x3 Gauss points integrate bilinear-map Jacobians exactly.
  static const std::array<double, 3> gp{-0.7745966692414834, 0.0, 0.7745966692414834};
  static const std::array<double, 3> gw{5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
  const CellShape shape = cells[static_cast<std::size_t>(c)].shape;
  double sum = 0.0;
  if (shape == CellShape::Segment) {
    for (int i = 0; i < 3; ++i) sum += gw[static_cast<std::size_t>(i)] * map_cell(c, {gp[static_cast<std::size_t>(i)], 0.0}).det;
  } else if (shape == CellShape::Quad) {
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        sum += gw[static_cast<std::size_t>(i)] * gw[static_cast<std::size_t>(j)] *
               map_cell(c, {gp[static_cast<std::size_t>(i)], gp[static_cast<std::size_t>(j)]}).det;
  } else {
    sum = 0.5 * map_cell(c, {1.0 / 3.0, 1.0 / 3.0}).det;
  }
  return sum;
}

double Mesh::total_measure() const {
  double sum = 0.0;
  for (int c = 0; c < static_cast<int>(cells.size()); ++c) sum += cell_measure(c);
  return sum;
}

void Mesh::validate() const {
  const int nv = static_cast<int>(vertices.size());
  for (const Cell& cell : cells) {
    for (int i = 0; i < cell.vertex_count(); ++i) {
      const int v = cell.vertices[static_cast<std::size_t>(i)];
      if (v < 0 || v >= nv) throw std::invalid_argument("cell vertex index out of range");
    }
  }
  for (int c = 0; c < static_cast<int>(cells.size()); ++c) {
    if (cell_measure(c) <= 0.0)
      throw std::invalid_argument("cell " + std::to_string(c) + " has non-positive measure");
  }
  for (const BoundaryFacet& f : boundary_facets) {
    if (f.tag < 0 || f.tag >= static_cast<int>(boundary_tag_names.size()))
      throw std::invalid_argument("boundary facet has unknown tag");
    for (int i = 0; i < (dim == 1 ? 1 : 2); ++i)
      if (f.vertices[static_cast<std::size_t>(i)] < 0 || f.vertices[static_cast<std::size_t>(i)] >= nv)
        throw std::invalid_argument("boundary facet vertex index out of range");
  }
  // Re-derive ownership/coverage; throws if the tagging is not a partition.
  Mesh probe = *this;
  attach_boundary_facets(probe);
  if (parent_mesh && parent_links.size() != cells.size())
    throw std::invalid_argument("parent lineage incomplete");
}

MeshPtr cartesian_mesh(const Point& lo, const Point& hi, const std::array<int, 2>& counts) {
  const bool one_d = counts[1] == 0;
  if (counts[0] < 1 || (!one_d && counts[1] < 1)) throw std::invalid_argument("cell counts must be positive");
  if (hi[0] <= lo[0] || (!one_d && hi[1] <= lo[1])) throw std::invalid_argument("degenerate box");

  auto mesh = std::make_shared<Mesh>();
  if (one_d) {
    mesh->dim = 1;
    const int n = counts[0];
    mesh->vertices.reserve(static_cast<std::size_t>(n + 1));
    for (int i = 0; i <= n; ++i)
      mesh->vertices.push_back({lo[0] + (hi[0] - lo[0]) * static_cast<double>(i) / n, 0.0});
    for (int i = 0; i < n; ++i) {
      Cell c;
      c.shape = CellShape::Segment;
      c.vertices = {i, i + 1, -1, -1};
      mesh->cells.push_back(c);
    }
    mesh->boundary_tag_names = {"left", "right"};
    mesh->boundary_facets.push_back({{0, -1}, 0, -1, -1});
    mesh->boundary_facets.push_back({{n, -1}, 1, -1, -1});
  } else {
    mesh->dim = 2;
    const int nx = counts[0], ny = counts[1];
    auto vid = [nx](int i, int j) { return j * (nx + 1) + i; };
    for (int j = 0; j <= ny; ++j)
      for (int i = 0; i <= nx; ++i)
        mesh->vertices.push_back({lo[0] + (hi[0] - lo[0]) * static_cast<double>(i) / nx,
                                  lo[1] + (hi[1] - lo[1]) * static_cast<double>(j) / ny});
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        Cell c;
        c.shape = CellShape::Quad;
        c.vertices = {vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)};
        mesh->cells.push_back(c);
      }
    mesh->boundary_tag_names = {"left", "right", "bottom", "top"};
    for (int j = 0; j < ny; ++j) {
      mesh->boundary_facets.push_back({{vid(0, j), vid(0, j + 1)}, 0, -1, -1});
      mesh->boundary_facets.push_back({{vid(nx, j), vid(nx, j + 1)}, 1, -1, -1});
    }
    for (int i = 0; i < nx; ++i) {
      mesh->boundary_facets.push_back({{vid(i, 0), vid(i + 1, 0)}, 2, -1, -1});
      mesh->boundary_facets.push_back({{vid(i, ny), vid(i + 1, ny)}, 3, -1, -1});
    }
  }
  attach_boundary_facets(*mesh);
  return mesh;
}

namespace {

// Deduplicating vertex factory for refinement: lattice points are keyed by
// the topological entity they live on so shared points get one index.
class VertexPool {
public:
  explicit VertexPool(Mesh& out) : out_(out) {}

  int corner(int parent_vertex, const Point& x) {
    auto [it, inserted] = corners_.try_emplace(parent_vertex, -1);
    if (inserted) it->second = push(x);
    return it->second;
  }

  int on_edge(int va, int vb, int pos, int s, const Point& x) {
    if (va > vb) {
      std::swap(va, vb);
      pos = s - pos;
    }
    auto [it, inserted] = edge_pts_.try_emplace((edge_key(va, vb) << 8) | static_cast<std::uint64_t>(pos), -1);
    if (inserted) it->second = push(x);
    return it->second;
  }

  int interior(const Point& x) { return push(x); }

private:
  int push(const Point& x) {
    out_.vertices.push_back(x);
    return static_cast<int>(out_.vertices.size()) - 1;
  }
  Mesh& out_;
  std::unordered_map<int, int> corners_;
  std::unordered_map<std::uint64_t, int> edge_pts_;
};

} // namespace

MeshPtr uniform_refine(const MeshPtr& mesh, int factor) {
  if (factor < 2) throw std::invalid_argument("refinement factor must be >= 2");
  const Mesh& src = *mesh;
  const int s = factor;

  auto fine = std::make_shared<Mesh>();
  fine->dim = src.dim;
  fine->boundary_tag_names = src.boundary_tag_names;
  fine->parent_mesh = mesh;
  fine->refine_factor = s;
  VertexPool pool(*fine);

  auto add_cell = [&](CellShape shape, std::array<int, 4> verts, int parent, int child_idx, const Point& origin,
                      const std::array<Point, 2>& basis) {
    Cell c;
    c.shape = shape;
    c.vertices = verts;
    fine->cells.push_back(c);
    ParentLink link;
    link.parent = parent;
    link.child_index = child_idx;
    link.origin = origin;
    link.basis = basis;
    fine->parent_links.push_back(link);
  };

  for (int pc = 0; pc < static_cast<int>(src.cells.size()); ++pc) {
    const Cell& cell = src.cells[static_cast<std::size_t>(pc)];
    if (cell.shape == CellShape::Segment) {
      std::vector<int> lat(static_cast<std::size_t>(s + 1));
      for (int i = 0; i <= s; ++i) {
        const Point ref{-1.0 + 2.0 * i / s, 0.0};
        const Point x = src.map_cell(pc, ref).x;
        if (i == 0)
          lat[static_cast<std::size_t>(i)] = pool.corner(cell.vertices[0], x);
        else if (i == s)
          lat[static_cast<std::size_t>(i)] = pool.corner(cell.vertices[1], x);
        else
          lat[static_cast<std::size_t>(i)] = pool.on_edge(cell.vertices[0], cell.vertices[1], i, s, x);
      }
      for (int i = 0; i < s; ++i)
        add_cell(CellShape::Segment, {lat[static_cast<std::size_t>(i)], lat[static_cast<std::size_t>(i + 1)], -1, -1},
                 pc, i, {(2.0 * i + 1.0) / s - 1.0, 0.0}, {{{1.0 / s, 0.0}, {0.0, 1.0}}});
    } else if (cell.shape == CellShape::Quad) {
      std::vector<int> lat(static_cast<std::size_t>((s + 1) * (s + 1)));
      auto lid = [s](int i, int j) { return static_cast<std::size_t>(j * (s + 1) + i); };
      for (int j = 0; j <= s; ++j)
        for (int i = 0; i <= s; ++i) {
          const Point ref{-1.0 + 2.0 * i / s, -1.0 + 2.0 * j / s};
          const Point x = src.map_cell(pc, ref).x;
          const bool bi = i == 0 || i == s, bj = j == 0 || j == s;
          int id;
          if (bi && bj) {
            const int corner = (j == 0) ? (i == 0 ? 0 : 1) : (i == 0 ? 3 : 2);
            id = pool.corner(cell.vertices[static_cast<std::size_t>(corner)], x);
          } else if (bj) {
            const int va = cell.vertices[j == 0 ? 0 : 3], vb = cell.vertices[j == 0 ? 1 : 2];
            id = pool.on_edge(va, vb, i, s, x);
          } else if (bi) {
            const int va = cell.vertices[i == 0 ? 0 : 1], vb = cell.vertices[i == 0 ? 3 : 2];
            id = pool.on_edge(va, vb, j, s, x);
          } else {
            id = pool.interior(x);
          }
          lat[lid(i, j)] = id;
        }
      for (int j = 0; j < s; ++j)
        for (int i = 0; i < s; ++i)
          add_cell(CellShape::Quad,
                   {lat[lid(i, j)], lat[lid(i + 1, j)], lat[lid(i + 1, j + 1)], lat[lid(i, j + 1)]}, pc, j * s + i,
                   {(2.0 * i + 1.0) / s - 1.0, (2.0 * j + 1.0) / s - 1.0}, {{{1.0 / s, 0.0}, {0.0, 1.0 / s}}});
    } else {
      // Barycentric lattice (a, b), a + b <= s.
      std::map<std::pair<int, int>, int> lat;
      for (int b = 0; b <= s; ++b)
        for (int a = 0; a + b <= s; ++a) {
          const Point ref{static_cast<double>(a) / s, static_cast<double>(b) / s};
          const Point x = src.map_cell(pc, ref).x;
          int id;
          if (a == 0 && b == 0)
            id = pool.corner(cell.vertices[0], x);
          else if (a == s)
            id = pool.corner(cell.vertices[1], x);
          else if (b == s)
            id = pool.corner(cell.vertices[2], x);
          else if (b == 0)
            id = pool.on_edge(cell.vertices[0], cell.vertices[1], a, s, x);
          else if (a + b == s)
            id = pool.on_edge(cell.vertices[1], cell.vertices[2], b, s, x);
          else if (a == 0)
            id = pool.on_edge(cell.vertices[2], cell.vertices[0], s - b, s, x);
          else
            id = pool.interior(x);
          lat[{a, b}] = id;
        }
      int child = 0;
      for (int b = 0; b < s; ++b)
        for (int a = 0; a + b < s; ++a) {
          add_cell(CellShape::Tri, {lat[{a, b}], lat[{a + 1, b}], lat[{a, b + 1}], -1}, pc, child++,
                   {static_cast<double>(a) / s, static_cast<double>(b) / s},
                   {{{1.0 / s, 0.0}, {0.0, 1.0 / s}}});
          if (a + b <= s - 2)
            add_cell(CellShape::Tri, {lat[{a + 1, b}], lat[{a + 1, b + 1}], lat[{a, b + 1}], -1}, pc, child++,
                     {static_cast<double>(a + 1) / s, static_cast<double>(b) / s},
                     {{{0.0, 1.0 / s}, {-1.0 / s, 1.0 / s}}});
        }
    }
  }

  // Inherit tags: each fine boundary edge maps into a facet of its parent's
  // reference cell, which identifies the tagged parent facet.
  std::unordered_map<std::uint64_t, int> parent_tags; // (cell, local_facet) -> tag
  for (const BoundaryFacet& f : src.boundary_facets)
    parent_tags[(static_cast<std::uint64_t>(f.cell) << 8) | static_cast<std::uint64_t>(f.local_facet)] = f.tag;

  for (const auto& [key, use] : boundary_edge_map(*fine)) {
    (void)key;
    const Cell& cell = fine->cells[static_cast<std::size_t>(use.cell)];
    const auto lv = local_facet_vertices(cell.shape, use.local_facet);
    const ParentLink& link = fine->parent_links[static_cast<std::size_t>(use.cell)];
    const Point pa = link.map(reference_vertex(cell.shape, lv[0]));
    const Point pb = fine->dim == 1 ? pa : link.map(reference_vertex(cell.shape, lv[1]));
    const int parent_facet = find_local_facet(src.cells[static_cast<std::size_t>(link.parent)].shape, pa, pb);
    if (parent_facet < 0) throw std::invalid_argument("refined boundary edge does not lie on a parent facet");
    const auto it = parent_tags.find((static_cast<std::uint64_t>(link.parent) << 8) | static_cast<std::uint64_t>(parent_facet));
    if (it == parent_tags.end()) throw std::invalid_argument("parent boundary facet is untagged");
    BoundaryFacet f;
    f.vertices = {cell.vertices[static_cast<std::size_t>(lv[0])],
                  fine->dim == 1 ? -1 : cell.vertices[static_cast<std::size_t>(lv[1])]};
    f.tag = it->second;
    f.cell = use.cell;
    f.local_facet = use.local_facet;
    fine->boundary_facets.push_back(f);
  }
  return fine;
}

MeshPtr annulus_sector_mesh(const std::array<double, 2>& r_range, const std::array<double, 2>& theta_range,
                            const std::array<int, 2>& counts, bool split_to_triangles) {
  const double r0 = r_range[0], r1 = r_range[1];
  const double t0 = theta_range[0], t1 = theta_range[1];
  if (!(r0 > 0.0) || !(r1 > r0)) throw std::invalid_argument("need 0 < r_min < r_max");
  if (!(t1 > t0) || t1 - t0 > 2.0 * M_PI + 1e-12) throw std::invalid_argument("degenerate angle range");
  const int nr = counts[0], nt = counts[1];
  if (nr < 1 || nt < 1) throw std::invalid_argument("cell counts must be positive");

  auto mesh = std::make_shared<Mesh>();
  mesh->dim = 2;
  mesh->boundary_tag_names = {"inner", "outer", "flat"};
  auto vid = [nr](int jr, int it) { return it * (nr + 1) + jr; };
  for (int it = 0; it <= nt; ++it)
    for (int jr = 0; jr <= nr; ++jr) {
      const double r = r0 + (r1 - r0) * static_cast<double>(jr) / nr;
      const double t = t0 + (t1 - t0) * static_cast<double>(it) / nt;
      mesh->vertices.push_back({r * std::cos(t), r * std::sin(t)});
    }

  auto tag_edge = [&](int tag, int va, int vb) { mesh->boundary_facets.push_back({{va, vb}, tag, -1, -1}); };
  for (int it = 0; it < nt; ++it)
    for (int jr = 0; jr < nr; ++jr) {
      const int a = vid(jr, it), b = vid(jr + 1, it), c = vid(jr + 1, it + 1), d = vid(jr, it + 1);
      if (split_to_triangles) {
        Cell t1c, t2c;
        t1c.shape = CellShape::Tri;
        t1c.vertices = {a, b, c, -1};
        t2c.shape = CellShape::Tri;
        t2c.vertices = {a, c, d, -1};
        mesh->cells.push_back(t1c);
        mesh->cells.push_back(t2c);
      } else {
        Cell q;
        q.shape = CellShape::Quad;
        q.vertices = {a, b, c, d};
        mesh->cells.push_back(q);
      }
      if (jr == 0) tag_edge(0, a, d);
      if (jr == nr - 1) tag_edge(1, b, c);
      if (it == 0) tag_edge(2, a, b);
      if (it == nt - 1) tag_edge(2, c, d);
    }
  attach_boundary_facets(*mesh);
  return mesh;
}

MeshPtr import_mesh(std::istream& in) {
  auto mesh = std::make_shared<Mesh>();
  std::string line;
  int lineno = 0;
  bool header_seen = false;
  std::unordered_map<std::string, int> tag_ids;

  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string kind;
    if (!(ls >> kind)) continue;

    auto need_int = [&](const char* what) {
      long long v;
      if (!(ls >> v)) throw ParseError(std::string("expected ") + what, lineno);
      return static_cast<int>(v);
    };
    auto need_double = [&](const char* what) {
      double v;
      if (!(ls >> v)) throw ParseError(std::string("expected ") + what, lineno);
      return v;
    };

    if (kind == "mesh") {
      mesh->dim = need_int("dimension");
      if (mesh->dim != 1 && mesh->dim != 2) throw ParseError("dimension must be 1 or 2", lineno);
      header_seen = true;
    } else if (kind == "v") {
      if (!header_seen) throw ParseError("vertex before mesh header", lineno);
      Point p{need_double("x coordinate"), 0.0};
      if (mesh->dim == 2) p[1] = need_double("y coordinate");
      mesh->vertices.push_back(p);
    } else if (kind == "c") {
      if (!header_seen) throw ParseError("cell before mesh header", lineno);
      std::string shape_name;
      if (!(ls >> shape_name)) throw ParseError("expected cell shape", lineno);
      Cell c;
      if (shape_name == "segment")
        c.shape = CellShape::Segment;
      else if (shape_name == "quad")
        c.shape = CellShape::Quad;
      else if (shape_name == "tri")
        c.shape = CellShape::Tri;
      else
        throw ParseError("unknown cell shape '" + shape_name + "'", lineno);
      for (int i = 0; i < cell_vertex_count(c.shape); ++i) {
        const int v = need_int("vertex index");
        if (v < 0 || v >= static_cast<int>(mesh->vertices.size()))
          throw ParseError("vertex index " + std::to_string(v) + " out of range", lineno);
        c.vertices[static_cast<std::size_t>(i)] = v;
      }
      mesh->cells.push_back(c);
    } else if (kind == "b") {
      if (!header_seen) throw ParseError("boundary facet before mesh header", lineno);
      std::string tag;
      if (!(ls >> tag)) throw ParseError("expected boundary tag", lineno);
      auto [it, inserted] = tag_ids.try_emplace(tag, static_cast<int>(mesh->boundary_tag_names.size()));
      if (inserted) mesh->boundary_tag_names.push_back(tag);
      BoundaryFacet f;
      f.tag = it->second;
      for (int i = 0; i < (mesh->dim == 1 ? 1 : 2); ++i) {
        const int v = need_int("facet vertex index");
        if (v < 0 || v >= static_cast<int>(mesh->vertices.size()))
          throw ParseError("vertex index " + std::to_string(v) + " out of range", lineno);
        f.vertices[static_cast<std::size_t>(i)] = v;
      }
      mesh->boundary_facets.push_back(f);
    } else {
      throw ParseError("unknown record '" + kind + "'", lineno);
    }
  }
  if (!header_seen) throw ParseError("missing mesh header", std::max(1, lineno));
  try {
    attach_boundary_facets(*mesh);
    mesh->validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(e.what(), lineno);
  }
  return mesh;
}

MeshPtr import_mesh_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open mesh file: " + path);
  return import_mesh(in);
}

void export_mesh(const Mesh& mesh, std::ostream& out) {
  out << "mesh " << mesh.dim << "\n";
  out.precision(17);
  for (const Point& v : mesh.vertices) {
    out << "v " << v[0];
    if (mesh.dim == 2) out << " " << v[1];
    out << "\n";
  }
  for (const Cell& c : mesh.cells) {
    out << "c " << (c.shape == CellShape::Segment ? "segment" : c.shape == CellShape::Quad ? "quad" : "tri");
    for (int i = 0; i < c.vertex_count(); ++i) out << " " << c.vertices[static_cast<std::size_t>(i)];
    out << "\n";
  }
  for (const BoundaryFacet& f : mesh.boundary_facets) {
    out << "b " << mesh.tag_name(f.tag) << " " << f.vertices[0];
    if (mesh.dim == 2) out << " " << f.vertices[1];
    out << "\n";
  }
}

} // namespace feinn
