#pragma once

#include "feinn/types.hpp"

#include <array>
#include <iosfwd>
#include <memory>
#include <optional>
#include <vector>

namespace feinn {

enum class CellShape : std::uint8_t { Segment, Quad, Tri };

int cell_vertex_count(CellShape shape);
int cell_facet_count(CellShape shape);
double reference_measure(CellShape shape);

struct Cell {
  CellShape shape = CellShape::Quad;
  std::array<int, 4> vertices{-1, -1, -1, -1};

  int vertex_count() const { return cell_vertex_count(shape); }
};

/// Tagged boundary facet: a vertex in 1D, an edge in 2D. `cell`/`local_facet`
/// identify the unique owning cell.
struct BoundaryFacet {
  std::array<int, 2> vertices{-1, -1};
  int tag = -1;
  int cell = -1;
  int local_facet = -1;
};

/// Affine placement of a child cell inside its parent's reference cell:
/// ref_parent = origin + basis * ref_child.
struct ParentLink {
  int parent = -1;
  int child_index = -1;
  Point origin{0.0, 0.0};
  std::array<Point, 2> basis{{{1.0, 0.0}, {0.0, 1.0}}};

  Point map(const Point& ref_child) const {
    return {origin[0] + basis[0][0] * ref_child[0] + basis[1][0] * ref_child[1],
            origin[1] + basis[0][1] * ref_child[0] + basis[1][1] * ref_child[1]};
  }
};

/// Conforming mesh of segments (1D) or quads/triangles (2D). Immutable after
/// construction; refinement lineage links back to the source mesh.
class Mesh {
public:
  int dim = 2;
  std::vector<Point> vertices;
  std::vector<Cell> cells;
  std::vector<BoundaryFacet> boundary_facets;
  std::vector<std::string> boundary_tag_names;

  std::shared_ptr<const Mesh> parent_mesh;
  int refine_factor = 0;
  std::vector<ParentLink> parent_links; // per cell, when parent_mesh is set

  int tag_id(const std::string& name) const; // -1 if absent
  const std::string& tag_name(int id) const { return boundary_tag_names[static_cast<std::size_t>(id)]; }

  /// Geometry map of cell c at reference point: physical coords, columns of
  /// the Jacobian, and its determinant (1D: dx/dxi in jac[0][0]).
  struct MapPoint {
    Point x;
    std::array<Point, 2> jac; // jac[j] = d x / d ref_j
    double det = 0.0;
  };
  MapPoint map_cell(int c, const Point& ref) const;

  /// Walks parent links from this mesh to `ancestor`, composing the affine
  /// submaps; returns the ancestor cell index and the reference point there.
  std::pair<int, Point> to_ancestor(const Mesh& ancestor, int cell, const Point& ref) const;

  double cell_measure(int c) const;
  double total_measure() const;

  /// Consistency checks (index ranges, positive measure, facet ownership,
  /// full boundary coverage). Throws on violation.
  void validate() const;
};

using MeshPtr = std::shared_ptr<const Mesh>;

struct MeshHierarchy {
  std::vector<MeshPtr> levels; // coarse to fine
};

/// Axis-aligned box [lo, hi] split into counts[i] cells per axis; 1D when
/// counts[1] == 0. Boundary tags: left/right (1D adds nothing else),
/// plus bottom/top in 2D.
MeshPtr cartesian_mesh(const Point& lo, const Point& hi, const std::array<int, 2>& counts);

/// Splits every cell edge into `factor` parts; tags are inherited and parent
/// lineage recorded on the result.
MeshPtr uniform_refine(const MeshPtr& mesh, int factor);

/// Structured polar-mapped mesh of {(r cos t, r sin t)} over r_range x
/// theta_range with straight-edged cells; tags inner/outer/flat. With
/// split_to_triangles each quad becomes two triangles.
MeshPtr annulus_sector_mesh(const std::array<double, 2>& r_range, const std::array<double, 2>& theta_range,
                            const std::array<int, 2>& counts, bool split_to_triangles);

/// Plain-text mesh format: `mesh <dim>`, then `v x [y]`, `c <shape> i0 ...`,
/// `b <tag> i0 [i1]` records; `#` starts a comment.
MeshPtr import_mesh(std::istream& in);
MeshPtr import_mesh_file(const std::string& path);
void export_mesh(const Mesh& mesh, std::ostream& out);

} // namespace feinn
