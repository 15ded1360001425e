#include <doctest.h>

#include "feinn/mesh.hpp"

#include <cmath>
#include <set>
#include <sstream>

using namespace feinn;

TEST_SUITE_BEGIN("mesh");

TEST_CASE("single-cell unit square") {
  const MeshPtr m = cartesian_mesh({0.0, 0.0}, {1.0, 1.0}, {1, 1});
  CHECK(m->cells.size() == 1);
  CHECK(m->vertices.size() == 4);
  CHECK(m->boundary_facets.size() == 4);
  CHECK(m->total_measure() == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("50x50 matches the 2601-vertex lattice") {
  const MeshPtr m = cartesian_mesh({0.0, 0.0}, {1.0, 1.0}, {50, 50});
  CHECK(m->cells.size() == 2500);
  CHECK(m->vertices.size() == 2601);
}

TEST_CASE("cell areas sum to the box area") {
  // Oracle: per-cell Jacobian integrals against the analytic box area.
  const MeshPtr m = cartesian_mesh({0.0, 0.0}, {1.0, 1.0}, {2, 2});
  CHECK(m->cells.size() == 4);
  CHECK(m->vertices.size() == 9);
  double sum = 0.0;
  for (int c = 0; c < 4; ++c) sum += m->cell_measure(c);
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("invalid counts are rejected") {
  CHECK_THROWS_AS(cartesian_mesh({0.0, 0.0}, {1.0, 1.0}, {0, 3}), std::invalid_argument);
  CHECK_THROWS_AS(cartesian_mesh({0.0, 0.0}, {1.0, 1.0}, {3, -1}), std::invalid_argument);
  CHECK_THROWS_AS(cartesian_mesh({1.0, 0.0}, {0.0, 1.0}, {2, 2}), std::invalid_argument);
}

TEST_CASE("refining a single quad") {
  const MeshPtr m = cartesian_mesh({0.0, 0.0}, {1.0, 1.0}, {1, 1});
  const MeshPtr f = uniform_refine(m, 2);
  CHECK(f->cells.size() == 4);
  CHECK(f->vertices.size() == 9);
  CHECK_THROWS_AS(uniform_refine(m, 1), std::invalid_argument);
}

TEST_CASE("refined vertex counts follow the tensor-product formula") {
  for (const auto [nx, ny] : {std::pair{3, 2}, std::pair{4, 4}}) {
    const MeshPtr m = cartesian_mesh({0.0, 0.0}, {1.0, 1.0}, {nx, ny});
    const MeshPtr f = uniform_refine(m, 2);
    CHECK(static_cast<int>(f->vertices.size()) == (2 * nx + 1) * (2 * ny + 1));
  }
}

TEST_CASE("refinement preserves measure and tags per factor") {
  const MeshPtr m = cartesian_mesh({0.0, 0.0}, {2.0, 1.0}, {3, 2});
  for (int s : {2, 3}) {
    const MeshPtr f = uniform_refine(m, s);
    CHECK(f->cells.size() == m->cells.size() * static_cast<std::size_t>(s * s));
    CHECK(f->total_measure() == doctest::Approx(m->total_measure()).epsilon(1e-12));
    // Child cells of one parent tile the parent exactly.
    std::vector<double> child_area(m->cells.size(), 0.0);
    for (int c = 0; c < static_cast<int>(f->cells.size()); ++c)
      child_area[static_cast<std::size_t>(f->parent_links[static_cast<std::size_t>(c)].parent)] += f->cell_measure(c);
    for (std::size_t p = 0; p < m->cells.size(); ++p)
      CHECK(child_area[p] == doctest::Approx(m->cell_measure(static_cast<int>(p))).epsilon(1e-12));
    // Tags survive: same number of facets per tag, scaled by s.
    for (int t = 0; t < static_cast<int>(m->boundary_tag_names.size()); ++t) {
      const auto count = [t](const Mesh& mm) {
        return std::count_if(mm.boundary_facets.begin(), mm.boundary_facets.end(),
                             [t](const BoundaryFacet& b) { return b.tag == t; });
      };
      CHECK(count(*f) == s * count(*m));
    }
    f->validate();
  }
}

TEST_CASE("triangle refinement tiles parents") {
  const MeshPtr m = annulus_sector_mesh({0.5, 1.0}, {0.0, M_PI / 2}, {2, 3}, true);
  const MeshPtr f = uniform_refine(m, 3);
  CHECK(f->cells.size() == m->cells.size() * 9);
  CHECK(f->total_measure() == doctest::Approx(m->total_measure()).epsilon(1e-12));
  f->validate();
}

TEST_CASE("1D refinement") {
  const MeshPtr m = cartesian_mesh({0.0, 0.0}, {1.0, 0.0}, {4, 0});
  CHECK(m->dim == 1);
  CHECK(m->cells.size() == 4);
  const MeshPtr f = uniform_refine(m, 3);
  CHECK(f->cells.size() == 12);
  CHECK(f->total_measure() == doctest::Approx(1.0).epsilon(1e-14));
  f->validate();
}

TEST_CASE("annulus sector counts and area") {
  const MeshPtr m = annulus_sector_mesh({0.05, 0.11}, {0.0, M_PI}, {50, 50}, true);
  CHECK(m->cells.size() == 5000);
  const double exact = 0.5 * M_PI * (0.11 * 0.11 - 0.05 * 0.05);
  CHECK(m->total_measure() == doctest::Approx(exact).epsilon(1e-3));
  m->validate();

  const MeshPtr tiny = annulus_sector_mesh({0.05, 0.11}, {0.0, M_PI}, {1, 1}, true);
  CHECK(tiny->cells.size() == 2);
  CHECK_THROWS_AS(annulus_sector_mesh({0.0, 0.1}, {0.0, 1.0}, {2, 2}, true), std::invalid_argument);
  CHECK_THROWS_AS(annulus_sector_mesh({0.2, 0.1}, {0.0, 1.0}, {2, 2}, true), std::invalid_argument);
}

TEST_CASE("boundary tags cover every boundary edge exactly once") {
  for (const MeshPtr& m :
       {cartesian_mesh({0.0, 0.0}, {1.0, 1.0}, {5, 3}), annulus_sector_mesh({0.1, 0.3}, {0.0, 2.0}, {4, 5}, false)}) {
    std::set<std::pair<int, int>> seen;
    for (const BoundaryFacet& f : m->boundary_facets) {
      auto key = std::minmax(f.vertices[0], f.vertices[1]);
      CHECK(seen.emplace(key.first, key.second).second);
    }
    CHECK_NOTHROW(m->validate());
  }
}

TEST_CASE("mesh text import round-trips") {
  const MeshPtr m = cartesian_mesh({0.0, 0.0}, {1.0, 1.0}, {4, 4});
  std::stringstream io;
  export_mesh(*m, io);
  const MeshPtr back = import_mesh(io);
  REQUIRE(back->vertices.size() == m->vertices.size());
  REQUIRE(back->cells.size() == m->cells.size());
  for (std::size_t v = 0; v < m->vertices.size(); ++v) {
    CHECK(back->vertices[v][0] == m->vertices[v][0]);
    CHECK(back->vertices[v][1] == m->vertices[v][1]);
  }
  for (std::size_t c = 0; c < m->cells.size(); ++c)
    for (int i = 0; i < 4; ++i) CHECK(back->cells[c].vertices[static_cast<std::size_t>(i)] == m->cells[c].vertices[static_cast<std::size_t>(i)]);
  REQUIRE(back->boundary_facets.size() == m->boundary_facets.size());
  for (std::size_t f = 0; f < m->boundary_facets.size(); ++f)
    CHECK(back->tag_name(back->boundary_facets[f].tag) == m->tag_name(m->boundary_facets[f].tag));
}

TEST_CASE("single-quad file equals the constructor") {
  std::stringstream io("mesh 2\nv 0 0\nv 1 0\nv 1 1\nv 0 1\nc quad 0 1 2 3\n"
                       "b left 3 0\nb right 1 2\nb bottom 0 1\nb top 2 3\n");
  const MeshPtr m = import_mesh(io);
  const MeshPtr ref = cartesian_mesh({0.0, 0.0}, {1.0, 1.0}, {1, 1});
  CHECK(m->cells.size() == ref->cells.size());
  CHECK(m->vertices.size() == ref->vertices.size());
  CHECK(m->total_measure() == doctest::Approx(1.0));
}

TEST_CASE("import errors carry line numbers") {
  std::stringstream bad_index("mesh 2\nv 0 0\nv 1 0\nv 1 1\nc tri 0 1 7\n");
  CHECK_THROWS_WITH_AS(import_mesh(bad_index), doctest::Contains("line 5"), ParseError);
  std::stringstream bad_shape("mesh 2\nv 0 0\nc blob 0\n");
  CHECK_THROWS_WITH_AS(import_mesh(bad_shape), doctest::Contains("blob"), ParseError);
  std::stringstream no_header("v 0 0\n");
  CHECK_THROWS_AS(import_mesh(no_header), ParseError);
}

TEST_CASE("lineage maps compose back to ancestors") {
  const MeshPtr m = cartesian_mesh({0.0, 0.0}, {1.0, 1.0}, {2, 2});
  const MeshPtr f1 = uniform_refine(m, 2);
  const MeshPtr f2 = uniform_refine(f1, 3);
  // A physical point reached through the child map should match the ancestor map.
  const Point ref{0.3, -0.4};
  for (int c : {0, 7, 35}) {
    const Point x = f2->map_cell(c, ref).x;
    const auto [pc, pref] = f2->to_ancestor(*m, c, ref);
    const Point px = m->map_cell(pc, pref).x;
    CHECK(x[0] == doctest::Approx(px[0]).epsilon(1e-13));
    CHECK(x[1] == doctest::Approx(px[1]).epsilon(1e-13));
  }
}

TEST_SUITE_END();
