#include "feinn/assembly.hpp"

#include <algorithm>
#include <cmath>

namespace feinn {

namespace {

Point phys_grad(const Mesh::MapPoint& mp, const Point& gref, int dim) {
  if (dim == 1) return {gref[0] / mp.jac[0][0], 0.0};
  const double inv = 1.0 / mp.det;
  return {inv * (mp.jac[1][1] * gref[0] - mp.jac[0][1] * gref[1]),
          inv * (-mp.jac[1][0] * gref[0] + mp.jac[0][0] * gref[1])};
}

std::array<int, 2> facet_local_vertices(CellShape shape, int facet) {
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

Point reference_corner(CellShape shape, int local) {
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

WeakForm::FieldSlot& WeakForm::slot(CoefficientId f) {
  switch (f) {
    case CoefficientId::Kappa: return kappa_;
    case CoefficientId::Beta: return beta_;
    case CoefficientId::Sigma: return sigma_;
    case CoefficientId::Source: return source_;
    case CoefficientId::Neumann: return neumann_;
  }
  throw std::invalid_argument("unknown coefficient id");
}

const WeakForm::FieldSlot& WeakForm::slot(CoefficientId f) const {
  return const_cast<WeakForm*>(this)->slot(f);
}

WeakForm::WeakForm(ProblemDefinition problem, FESpacePtr trial, FESpacePtr test, int quad_degree)
    : problem_(std::move(problem)), trial_(std::move(trial)), test_(std::move(test)) {
  same_space_ = trial_->mesh.get() == test_->mesh.get() && trial_->order == test_->order;
  degree_ = quad_degree > 0 ? quad_degree : 2 * std::max(trial_->order, test_->order) + 2;
  build_volume();
  build_boundary();
}

void WeakForm::build_volume() {
  const Mesh& tm = *test_->mesh;
  const Mesh& um = *trial_->mesh;
  const int dim = tm.dim;
  int qp_flat = 0;
  int test_tab = 0, trial_tab = 0;
  std::vector<double> tvals;
  std::vector<Point> tgrads;

  for (int c = 0; c < static_cast<int>(tm.cells.size()); ++c) {
    const Cell& cell = tm.cells[static_cast<std::size_t>(c)];
    const QuadratureRule rule = gauss_rule(cell.shape, degree_);
    const ReferenceElement& test_el = ReferenceElement::get(cell.shape, test_->order);

    VolumeBlock blk;
    blk.test_cell = c;
    blk.qp_begin = qp_flat;
    blk.qp_count = static_cast<int>(rule.size());
    blk.test_n = test_el.node_count();
    blk.test_tab = test_tab;
    blk.trial_tab = trial_tab;

    const auto [uc, _] = same_space_ ? std::pair<int, Point>{c, {}} : tm.to_ancestor(um, c, rule.points[0]);
    blk.trial_cell = uc;
    const Cell& ucell = um.cells[static_cast<std::size_t>(uc)];
    const ReferenceElement& trial_el = ReferenceElement::get(ucell.shape, trial_->order);
    blk.trial_n = trial_el.node_count();

    for (std::size_t q = 0; q < rule.size(); ++q) {
      const Point& ref = rule.points[q];
      const Mesh::MapPoint mp = tm.map_cell(c, ref);
      if (mp.det <= 0.0) throw NumericError("non-positive Jacobian in cell " + std::to_string(c));
      wdet_.push_back(rule.weights[q] * mp.det);
      phys_.push_back(mp.x);

      test_el.eval(ref, tvals, &tgrads);
      for (int j = 0; j < blk.test_n; ++j) {
        test_vals_.push_back(tvals[static_cast<std::size_t>(j)]);
        test_grads_.push_back(phys_grad(mp, tgrads[static_cast<std::size_t>(j)], dim));
      }

      if (same_space_) {
        for (int j = 0; j < blk.test_n; ++j) {
          trial_vals_.push_back(tvals[static_cast<std::size_t>(j)]);
          trial_grads_.push_back(test_grads_[static_cast<std::size_t>(blk.test_tab + static_cast<int>(q) * blk.test_n + j)]);
        }
      } else {
        const auto [ucell_q, uref] = tm.to_ancestor(um, c, ref);
        if (ucell_q != uc) throw NumericError("test cell spans multiple trial cells");
        const Mesh::MapPoint ump = um.map_cell(uc, uref);
        trial_el.eval(uref, tvals, &tgrads);
        for (int j = 0; j < blk.trial_n; ++j) {
          trial_vals_.push_back(tvals[static_cast<std::size_t>(j)]);
          trial_grads_.push_back(phys_grad(ump, tgrads[static_cast<std::size_t>(j)], dim));
        }
      }
      ++qp_flat;
    }
    test_tab += blk.qp_count * blk.test_n;
    trial_tab += blk.qp_count * blk.trial_n;
    cells_.push_back(blk);
  }

  // Analytic coefficient caches at every volume point.
  const Eigen::Index nq = static_cast<Eigen::Index>(wdet_.size());
  auto fill = [&](FieldSlot& s, const ScalarField& f, double fallback) {
    s.values.resize(nq);
    for (Eigen::Index q = 0; q < nq; ++q) {
      const Point& x = phys_[static_cast<std::size_t>(q)];
      const double v = f ? f(x[0], x[1]) : fallback;
      if (!std::isfinite(v)) throw NumericError("coefficient not finite at quadrature point");
      s.values(q) = v;
    }
    s.points = phys_;
  };
  fill(kappa_, problem_.kappa, 1.0);
  fill(sigma_, problem_.sigma, 0.0);
  fill(source_, problem_.source, 0.0);
  beta_.values.resize(2 * nq);
  for (Eigen::Index q = 0; q < nq; ++q) {
    const Point& x = phys_[static_cast<std::size_t>(q)];
    const Point b = problem_.beta ? problem_.beta(x[0], x[1]) : Point{0.0, 0.0};
    if (!std::isfinite(b[0]) || !std::isfinite(b[1])) throw NumericError("convection field not finite at quadrature point");
    beta_.values(q) = b[0];
    beta_.values(nq + q) = b[1];
  }
  beta_.points = phys_;
}

void WeakForm::build_boundary() {
  const Mesh& tm = *test_->mesh;
  std::vector<int> neumann_ids;
  for (const std::string& t : problem_.neumann_tags) {
    const int id = tm.tag_id(t);
    if (id < 0) throw std::invalid_argument("unknown Neumann tag '" + t + "'");
    neumann_ids.push_back(id);
  }
  if (neumann_ids.empty()) return;

  const ReferenceElement& test_el_seg = ReferenceElement::get(CellShape::Segment, test_->order);
  (void)test_el_seg;
  std::vector<double> vals;
  int qp_flat = 0, tab = 0;
  QuadratureRule line = gauss_rule(CellShape::Segment, degree_);

  for (const BoundaryFacet& f : tm.boundary_facets) {
    if (std::find(neumann_ids.begin(), neumann_ids.end(), f.tag) == neumann_ids.end()) continue;
    const Cell& cell = tm.cells[static_cast<std::size_t>(f.cell)];
    const ReferenceElement& el = ReferenceElement::get(cell.shape, test_->order);
    FacetBlock blk;
    blk.test_cell = f.cell;
    blk.tag = f.tag;
    blk.qp_begin = qp_flat;
    blk.test_n = el.node_count();
    blk.tab = tab;

    if (tm.dim == 1) {
      const Point ref = reference_corner(CellShape::Segment, f.local_facet);
      facet_w_.push_back(1.0);
      facet_phys_.push_back(tm.map_cell(f.cell, ref).x);
      el.eval(ref, vals, nullptr);
      for (int j = 0; j < blk.test_n; ++j) facet_test_vals_.push_back(vals[static_cast<std::size_t>(j)]);
      ++qp_flat;
      blk.qp_count = 1;
    } else {
      const auto lv = facet_local_vertices(cell.shape, f.local_facet);
      const Point ra = reference_corner(cell.shape, lv[0]);
      const Point rb = reference_corner(cell.shape, lv[1]);
      const Point& xa = tm.vertices[static_cast<std::size_t>(cell.vertices[static_cast<std::size_t>(lv[0])])];
      const Point& xb = tm.vertices[static_cast<std::size_t>(cell.vertices[static_cast<std::size_t>(lv[1])])];
      const double half_len = 0.5 * std::hypot(xb[0] - xa[0], xb[1] - xa[1]);
      for (std::size_t q = 0; q < line.size(); ++q) {
        const double t = 0.5 * (line.points[q][0] + 1.0);
        const Point ref{ra[0] + t * (rb[0] - ra[0]), ra[1] + t * (rb[1] - ra[1])};
        facet_w_.push_back(line.weights[q] * half_len);
        facet_phys_.push_back(tm.map_cell(f.cell, ref).x);
        el.eval(ref, vals, nullptr);
        for (int j = 0; j < blk.test_n; ++j) facet_test_vals_.push_back(vals[static_cast<std::size_t>(j)]);
        ++qp_flat;
      }
      blk.qp_count = static_cast<int>(line.size());
    }
    tab += blk.qp_count * blk.test_n;
    facets_.push_back(blk);
  }

  neumann_known_.resize(static_cast<Eigen::Index>(facet_w_.size()));
  for (Eigen::Index q = 0; q < neumann_known_.size(); ++q) {
    const Point& x = facet_phys_[static_cast<std::size_t>(q)];
    const double v = problem_.neumann ? problem_.neumann(x[0], x[1]) : 0.0;
    if (!std::isfinite(v)) throw NumericError("Neumann flux not finite at boundary quadrature point");
    neumann_known_(q) = v;
  }
  neumann_.values = neumann_known_;
  neumann_.points = facet_phys_;
}

void WeakForm::set_unknown(CoefficientId field) {
  if (field == CoefficientId::Neumann) {
    set_unknown_neumann(problem_.neumann_tags);
    return;
  }
  slot(field).unknown = true;
}

void WeakForm::set_unknown_neumann(const std::vector<std::string>& tags) {
  neumann_.unknown = true;
  unknown_neumann_tagids_.clear();
  for (const std::string& t : tags) {
    const int id = test_->mesh->tag_id(t);
    if (id < 0) throw std::invalid_argument("unknown Neumann tag '" + t + "'");
    unknown_neumann_tagids_.push_back(id);
  }
  // Re-layout: flat indices over the unknown-tagged facets only.
  int flat = 0;
  neumann_.points.clear();
  for (auto& blk : facets_) {
    blk.unknown = std::find(unknown_neumann_tagids_.begin(), unknown_neumann_tagids_.end(), blk.tag) !=
                  unknown_neumann_tagids_.end();
    if (blk.unknown) {
      blk.unknown_begin = flat;
      flat += blk.qp_count;
      for (int q = 0; q < blk.qp_count; ++q)
        neumann_.points.push_back(facet_phys_[static_cast<std::size_t>(blk.qp_begin + q)]);
    } else {
      blk.unknown_begin = -1;
    }
  }
  neumann_.values = Vec::Zero(flat);
}

bool WeakForm::is_unknown(CoefficientId field) const { return slot(field).unknown; }

const std::vector<Point>& WeakForm::coefficient_points(CoefficientId field) const { return slot(field).points; }

Eigen::Index WeakForm::coefficient_size(CoefficientId field) const {
  if (field == CoefficientId::Neumann && neumann_.unknown) return neumann_.values.size();
  return slot(field).values.size();
}

void WeakForm::set_coefficient_values(CoefficientId field, const Vec& values) {
  FieldSlot& s = slot(field);
  if (!s.unknown) throw std::invalid_argument("coefficient is not flagged as unknown");
  if (values.size() != coefficient_size(field)) throw std::invalid_argument("coefficient value vector has wrong length");
  s.values = values;
}

Vec WeakForm::residual(const Vec& trial_values) const {
  if (trial_values.size() != trial_->dof_count()) throw std::invalid_argument("trial DOF vector has wrong length");
  Vec r = Vec::Zero(test_->free_count());
  const Eigen::Index nq = static_cast<Eigen::Index>(wdet_.size());

  for (const VolumeBlock& blk : cells_) {
    const int* udofs = trial_->cell_dof_ptr(blk.trial_cell);
    const int* vdofs = test_->cell_dof_ptr(blk.test_cell);
    for (int q = 0; q < blk.qp_count; ++q) {
      const Eigen::Index flat = blk.qp_begin + q;
      const double w = wdet_[static_cast<std::size_t>(flat)];
      // trial value and gradient at this point
      double u = 0.0;
      Point gu{0.0, 0.0};
      const double* tv = &trial_vals_[static_cast<std::size_t>(blk.trial_tab + q * blk.trial_n)];
      const Point* tg = &trial_grads_[static_cast<std::size_t>(blk.trial_tab + q * blk.trial_n)];
      for (int m = 0; m < blk.trial_n; ++m) {
        const double c = trial_values(udofs[m]);
        u += c * tv[m];
        gu[0] += c * tg[m][0];
        gu[1] += c * tg[m][1];
      }
      const double kap = kappa_.values(flat);
      const double sig = sigma_.values(flat);
      const double f = source_.values(flat);
      const double bx = beta_.values(flat), by = beta_.values(nq + flat);
      const double conv = bx * gu[0] + by * gu[1];
      const double* vv = &test_vals_[static_cast<std::size_t>(blk.test_tab + q * blk.test_n)];
      const Point* vg = &test_grads_[static_cast<std::size_t>(blk.test_tab + q * blk.test_n)];
      for (int j = 0; j < blk.test_n; ++j) {
        const int fi = test_->free_index[static_cast<std::size_t>(vdofs[j])];
        if (fi < 0) continue;
        r(fi) += w * (f * vv[j] - (kap * (gu[0] * vg[j][0] + gu[1] * vg[j][1]) + conv * vv[j] + sig * u * vv[j]));
      }
    }
  }

  for (const FacetBlock& blk : facets_) {
    const int* vdofs = test_->cell_dof_ptr(blk.test_cell);
    for (int q = 0; q < blk.qp_count; ++q) {
      const double eta =
          blk.unknown ? neumann_.values(blk.unknown_begin + q) : neumann_known_(blk.qp_begin + q);
      const double w = facet_w_[static_cast<std::size_t>(blk.qp_begin + q)];
      const double* vv = &facet_test_vals_[static_cast<std::size_t>(blk.tab + q * blk.test_n)];
      for (int j = 0; j < blk.test_n; ++j) {
        const int fi = test_->free_index[static_cast<std::size_t>(vdofs[j])];
        if (fi >= 0) r(fi) += w * eta * vv[j];
      }
    }
  }
  return r;
}

Vec WeakForm::vjp_state(const Vec& trial_values, const Vec& w) const {
  (void)trial_values;
  if (w.size() != test_->free_count()) throw std::invalid_argument("cotangent has wrong length");
  Vec out = Vec::Zero(trial_->free_count());
  const Eigen::Index nq = static_cast<Eigen::Index>(wdet_.size());

  for (const VolumeBlock& blk : cells_) {
    const int* udofs = trial_->cell_dof_ptr(blk.trial_cell);
    const int* vdofs = test_->cell_dof_ptr(blk.test_cell);
    for (int q = 0; q < blk.qp_count; ++q) {
      const Eigen::Index flat = blk.qp_begin + q;
      const double wq = wdet_[static_cast<std::size_t>(flat)];
      double W = 0.0;
      Point Wg{0.0, 0.0};
      const double* vv = &test_vals_[static_cast<std::size_t>(blk.test_tab + q * blk.test_n)];
      const Point* vg = &test_grads_[static_cast<std::size_t>(blk.test_tab + q * blk.test_n)];
      for (int j = 0; j < blk.test_n; ++j) {
        const int fi = test_->free_index[static_cast<std::size_t>(vdofs[j])];
        if (fi < 0) continue;
        const double c = w(fi);
        W += c * vv[j];
        Wg[0] += c * vg[j][0];
        Wg[1] += c * vg[j][1];
      }
      const double kap = kappa_.values(flat);
      const double sig = sigma_.values(flat);
      const double bx = beta_.values(flat), by = beta_.values(nq + flat);
      const double* tv = &trial_vals_[static_cast<std::size_t>(blk.trial_tab + q * blk.trial_n)];
      const Point* tg = &trial_grads_[static_cast<std::size_t>(blk.trial_tab + q * blk.trial_n)];
      for (int m = 0; m < blk.trial_n; ++m) {
        const int fm = trial_->free_index[static_cast<std::size_t>(udofs[m])];
        if (fm < 0) continue;
        out(fm) -= wq * (kap * (tg[m][0] * Wg[0] + tg[m][1] * Wg[1]) + (bx * tg[m][0] + by * tg[m][1]) * W +
                         sig * tv[m] * W);
      }
    }
  }
  return out;
}

Vec WeakForm::vjp_coefficient(CoefficientId field, const Vec& trial_values, const Vec& w) const {
  if (!slot(field).unknown) throw std::invalid_argument("coefficient is not flagged as unknown");
  if (w.size() != test_->free_count()) throw std::invalid_argument("cotangent has wrong length");
  const Eigen::Index nq = static_cast<Eigen::Index>(wdet_.size());
  Vec out = Vec::Zero(coefficient_size(field));

  if (field == CoefficientId::Neumann) {
    for (const FacetBlock& blk : facets_) {
      if (!blk.unknown) continue;
      const int* vdofs = test_->cell_dof_ptr(blk.test_cell);
      for (int q = 0; q < blk.qp_count; ++q) {
        double W = 0.0;
        const double* vv = &facet_test_vals_[static_cast<std::size_t>(blk.tab + q * blk.test_n)];
        for (int j = 0; j < blk.test_n; ++j) {
          const int fi = test_->free_index[static_cast<std::size_t>(vdofs[j])];
          if (fi >= 0) W += w(fi) * vv[j];
        }
        out(blk.unknown_begin + q) = facet_w_[static_cast<std::size_t>(blk.qp_begin + q)] * W;
      }
    }
    return out;
  }

  for (const VolumeBlock& blk : cells_) {
    const int* udofs = trial_->cell_dof_ptr(blk.trial_cell);
    const int* vdofs = test_->cell_dof_ptr(blk.test_cell);
    for (int q = 0; q < blk.qp_count; ++q) {
      const Eigen::Index flat = blk.qp_begin + q;
      const double wq = wdet_[static_cast<std::size_t>(flat)];
      double W = 0.0;
      Point Wg{0.0, 0.0};
      const double* vv = &test_vals_[static_cast<std::size_t>(blk.test_tab + q * blk.test_n)];
      const Point* vg = &test_grads_[static_cast<std::size_t>(blk.test_tab + q * blk.test_n)];
      for (int j = 0; j < blk.test_n; ++j) {
        const int fi = test_->free_index[static_cast<std::size_t>(vdofs[j])];
        if (fi < 0) continue;
        const double c = w(fi);
        W += c * vv[j];
        Wg[0] += c * vg[j][0];
        Wg[1] += c * vg[j][1];
      }
      if (field == CoefficientId::Source) {
        out(flat) = wq * W;
        continue;
      }
      double u = 0.0;
      Point gu{0.0, 0.0};
      const double* tv = &trial_vals_[static_cast<std::size_t>(blk.trial_tab + q * blk.trial_n)];
      const Point* tg = &trial_grads_[static_cast<std::size_t>(blk.trial_tab + q * blk.trial_n)];
      for (int m = 0; m < blk.trial_n; ++m) {
        const double c = trial_values(udofs[m]);
        u += c * tv[m];
        gu[0] += c * tg[m][0];
        gu[1] += c * tg[m][1];
      }
      switch (field) {
        case CoefficientId::Kappa:
          out(flat) = -wq * (gu[0] * Wg[0] + gu[1] * Wg[1]);
          break;
        case CoefficientId::Sigma:
          out(flat) = -wq * u * W;
          break;
        case CoefficientId::Beta:
          out(flat) = -wq * gu[0] * W;
          out(nq + flat) = -wq * gu[1] * W;
          break;
        default:
          break;
      }
    }
  }
  return out;
}

SparseMatrix WeakForm::system_matrix() const {
  std::vector<SparseMatrix::Triplet> triplets;
  const Eigen::Index nq = static_cast<Eigen::Index>(wdet_.size());
  for (const VolumeBlock& blk : cells_) {
    const int* udofs = trial_->cell_dof_ptr(blk.trial_cell);
    const int* vdofs = test_->cell_dof_ptr(blk.test_cell);
    for (int q = 0; q < blk.qp_count; ++q) {
      const Eigen::Index flat = blk.qp_begin + q;
      const double w = wdet_[static_cast<std::size_t>(flat)];
      const double kap = kappa_.values(flat);
      const double sig = sigma_.values(flat);
      const double bx = beta_.values(flat), by = beta_.values(nq + flat);
      const double* vv = &test_vals_[static_cast<std::size_t>(blk.test_tab + q * blk.test_n)];
      const Point* vg = &test_grads_[static_cast<std::size_t>(blk.test_tab + q * blk.test_n)];
      const double* tv = &trial_vals_[static_cast<std::size_t>(blk.trial_tab + q * blk.trial_n)];
      const Point* tg = &trial_grads_[static_cast<std::size_t>(blk.trial_tab + q * blk.trial_n)];
      for (int j = 0; j < blk.test_n; ++j) {
        const int fj = test_->free_index[static_cast<std::size_t>(vdofs[j])];
        if (fj < 0) continue;
        for (int m = 0; m < blk.trial_n; ++m) {
          const int fm = trial_->free_index[static_cast<std::size_t>(udofs[m])];
          if (fm < 0) continue;
          const double a = w * (kap * (tg[m][0] * vg[j][0] + tg[m][1] * vg[j][1]) +
                                (bx * tg[m][0] + by * tg[m][1]) * vv[j] + sig * tv[m] * vv[j]);
          triplets.emplace_back(fj, fm, a);
        }
      }
    }
  }
  return SparseMatrix::from_triplets(test_->free_count(), trial_->free_count(), triplets);
}

namespace {

// Shared cell loop for L2/H1 error integration with a batched evaluator.
ErrorNorms integrate_errors(const ScalarField& exact, const VectorField& exact_grad, const Mesh& mesh, int quad_degree,
                            const std::function<void(const std::vector<Point>&, const std::vector<int>&,
                                                     const std::vector<Point>&, Vec&, std::vector<Point>&)>& eval) {
  std::vector<Point> pts, refs;
  std::vector<int> cells;
  std::vector<double> ws;
  for (int c = 0; c < static_cast<int>(mesh.cells.size()); ++c) {
    const QuadratureRule rule = gauss_rule(mesh.cells[static_cast<std::size_t>(c)].shape, quad_degree);
    for (std::size_t q = 0; q < rule.size(); ++q) {
      const Mesh::MapPoint mp = mesh.map_cell(c, rule.points[q]);
      pts.push_back(mp.x);
      refs.push_back(rule.points[q]);
      cells.push_back(c);
      ws.push_back(rule.weights[q] * mp.det);
    }
  }
  Vec vals;
  std::vector<Point> grads;
  eval(pts, cells, refs, vals, grads);
  double l2 = 0.0, semi = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double du = vals(static_cast<Eigen::Index>(i)) - (exact ? exact(pts[i][0], pts[i][1]) : 0.0);
    l2 += ws[i] * du * du;
    if (exact_grad || !grads.empty()) {
      const Point ge = exact_grad ? exact_grad(pts[i][0], pts[i][1]) : Point{0.0, 0.0};
      const Point gc = grads.empty() ? Point{0.0, 0.0} : grads[i];
      const double gx = gc[0] - ge[0], gy = gc[1] - ge[1];
      semi += ws[i] * (gx * gx + gy * gy);
    }
  }
  return {std::sqrt(l2), std::sqrt(l2 + semi)};
}

} // namespace

ErrorNorms error_norms(const ScalarField& exact, const VectorField& exact_grad, const FEFunction& candidate,
                       int quad_degree) {
  const Mesh& mesh = *candidate.space->mesh;
  const FESpace& space = *candidate.space;
  // Shape tables per rule point, shared across cells of the same shape.
  struct Table {
    std::vector<std::vector<double>> vals;
    std::vector<std::vector<Point>> grads;
  };
  std::array<std::optional<Table>, 3> tables;
  auto table_for = [&](CellShape shape) -> const Table& {
    auto& slot = tables[static_cast<std::size_t>(shape)];
    if (!slot) {
      const QuadratureRule rule = gauss_rule(shape, quad_degree);
      const ReferenceElement& el = ReferenceElement::get(shape, space.order);
      Table t;
      t.vals.resize(rule.size());
      t.grads.resize(rule.size());
      for (std::size_t q = 0; q < rule.size(); ++q) el.eval(rule.points[q], t.vals[q], &t.grads[q]);
      slot = std::move(t);
    }
    return *slot;
  };
  return integrate_errors(
      exact, exact_grad, mesh, quad_degree,
      [&](const std::vector<Point>& pts, const std::vector<int>& cells, const std::vector<Point>& refs, Vec& vals,
          std::vector<Point>& grads) {
        vals.resize(static_cast<Eigen::Index>(pts.size()));
        grads.resize(pts.size());
        int last_cell = -1;
        std::size_t q_in_cell = 0;
        for (std::size_t i = 0; i < pts.size(); ++i) {
          const int c = cells[i];
          q_in_cell = (c == last_cell) ? q_in_cell + 1 : 0;
          last_cell = c;
          const Cell& cell = mesh.cells[static_cast<std::size_t>(c)];
          const Table& t = table_for(cell.shape);
          const int* dofs = space.cell_dof_ptr(c);
          const int n = space.cell_dof_count(c);
          double v = 0.0;
          Point gref{0.0, 0.0};
          for (int j = 0; j < n; ++j) {
            const double coef = candidate.values(dofs[j]);
            v += coef * t.vals[q_in_cell][static_cast<std::size_t>(j)];
            gref[0] += coef * t.grads[q_in_cell][static_cast<std::size_t>(j)][0];
            gref[1] += coef * t.grads[q_in_cell][static_cast<std::size_t>(j)][1];
          }
          vals(static_cast<Eigen::Index>(i)) = v;
          const Mesh::MapPoint mp = mesh.map_cell(c, refs[i]);
          grads[i] = phys_grad(mp, gref, mesh.dim);
        }
      });
}

ErrorNorms error_norms_nn(const ScalarField& exact, const VectorField& exact_grad, const MLP& net, const Mesh& mesh,
                          int quad_degree) {
  return integrate_errors(exact, exact_grad, mesh, quad_degree,
                          [&](const std::vector<Point>& pts, const std::vector<int>&, const std::vector<Point>&,
                              Vec& vals, std::vector<Point>& grads) {
                            const Mat x = points_matrix(pts, mesh.dim);
                            vals = forward(net.arch, net.theta, x);
                            const Mat g = grad_input(net.arch, net.theta, x);
                            grads.resize(pts.size());
                            for (std::size_t i = 0; i < pts.size(); ++i) {
                              grads[i] = {g(static_cast<Eigen::Index>(i), 0),
                                          mesh.dim > 1 ? g(static_cast<Eigen::Index>(i), 1) : 0.0};
                            }
                          });
}

ErrorNorms function_norms(const ScalarField& f, const VectorField& grad, const Mesh& mesh, int quad_degree) {
  return integrate_errors(f, grad, mesh, quad_degree,
                          [&](const std::vector<Point>& pts, const std::vector<int>&, const std::vector<Point>&,
                              Vec& vals, std::vector<Point>& grads) {
                            vals = Vec::Zero(static_cast<Eigen::Index>(pts.size()));
                            if (grad) grads.assign(pts.size(), Point{0.0, 0.0});
                          });
}

ErrorNorms fe_function_norms(const FEFunction& u, int quad_degree) {
  return error_norms(nullptr, nullptr, u, quad_degree);
}

SparseMatrix assemble_matrix(MatrixKind kind, const FESpacePtr& trial, const FESpacePtr& test,
                             const ProblemDefinition& problem, int quad_degree) {
  if (kind == MatrixKind::SystemA) {
    WeakForm wf(problem, trial, test, quad_degree);
    return wf.system_matrix();
  }
  if (trial.get() != test.get()) throw std::invalid_argument("mass/riesz matrices require trial == test");
  const FESpace& space = *test;
  const Mesh& mesh = *space.mesh;
  const int degree = quad_degree > 0 ? quad_degree : 2 * space.order + 2;
  std::vector<SparseMatrix::Triplet> triplets;
  std::vector<double> vals;
  std::vector<Point> grads;
  for (int c = 0; c < static_cast<int>(mesh.cells.size()); ++c) {
    const Cell& cell = mesh.cells[static_cast<std::size_t>(c)];
    const QuadratureRule rule = gauss_rule(cell.shape, degree);
    const ReferenceElement& el = ReferenceElement::get(cell.shape, space.order);
    const int* dofs = space.cell_dof_ptr(c);
    const int n = el.node_count();
    for (std::size_t q = 0; q < rule.size(); ++q) {
      const Mesh::MapPoint mp = mesh.map_cell(c, rule.points[q]);
      const double w = rule.weights[q] * mp.det;
      el.eval(rule.points[q], vals, kind == MatrixKind::RieszH1 ? &grads : nullptr);
      std::vector<Point> pg;
      if (kind == MatrixKind::RieszH1) {
        pg.resize(static_cast<std::size_t>(n));
        for (int j = 0; j < n; ++j) pg[static_cast<std::size_t>(j)] = phys_grad(mp, grads[static_cast<std::size_t>(j)], mesh.dim);
      }
      for (int j = 0; j < n; ++j) {
        const int fj = space.free_index[static_cast<std::size_t>(dofs[j])];
        if (fj < 0) continue;
        for (int m = 0; m < n; ++m) {
          const int fm = space.free_index[static_cast<std::size_t>(dofs[m])];
          if (fm < 0) continue;
          double a = vals[static_cast<std::size_t>(j)] * vals[static_cast<std::size_t>(m)];
          if (kind == MatrixKind::RieszH1)
            a += pg[static_cast<std::size_t>(j)][0] * pg[static_cast<std::size_t>(m)][0] +
                 pg[static_cast<std::size_t>(j)][1] * pg[static_cast<std::size_t>(m)][1];
          triplets.emplace_back(fj, fm, w * a);
        }
      }
    }
  }
  return SparseMatrix::from_triplets(space.free_count(), space.free_count(), triplets);
}

Vec assemble_residual(const ProblemDefinition& problem, const FEFunction& u, const FESpacePtr& test, int quad_degree) {
  WeakForm wf(problem, u.space, test, quad_degree);
  return wf.residual(u.values);
}

Vec assemble_residual_field(const ProblemDefinition& problem, const ScalarField& value, const VectorField& grad,
                            const FESpacePtr& test, int quad_degree) {
  const FESpace& space = *test;
  const Mesh& mesh = *space.mesh;
  Vec r = Vec::Zero(space.free_count());
  std::vector<double> vals;
  std::vector<Point> grads;
  for (int c = 0; c < static_cast<int>(mesh.cells.size()); ++c) {
    const Cell& cell = mesh.cells[static_cast<std::size_t>(c)];
    const QuadratureRule rule = gauss_rule(cell.shape, quad_degree);
    const ReferenceElement& el = ReferenceElement::get(cell.shape, space.order);
    const int* dofs = space.cell_dof_ptr(c);
    for (std::size_t q = 0; q < rule.size(); ++q) {
      const Mesh::MapPoint mp = mesh.map_cell(c, rule.points[q]);
      const double w = rule.weights[q] * mp.det;
      const double x = mp.x[0], y = mp.x[1];
      const double u = value(x, y);
      const Point gu = grad(x, y);
      const double kap = problem.kappa ? problem.kappa(x, y) : 1.0;
      const Point b = problem.beta ? problem.beta(x, y) : Point{0.0, 0.0};
      const double sig = problem.sigma ? problem.sigma(x, y) : 0.0;
      const double f = problem.source ? problem.source(x, y) : 0.0;
      el.eval(rule.points[q], vals, &grads);
      for (int j = 0; j < el.node_count(); ++j) {
        const int fj = space.free_index[static_cast<std::size_t>(dofs[j])];
        if (fj < 0) continue;
        const Point pg = phys_grad(mp, grads[static_cast<std::size_t>(j)], mesh.dim);
        r(fj) += w * (f * vals[static_cast<std::size_t>(j)] -
                      (kap * (gu[0] * pg[0] + gu[1] * pg[1]) + (b[0] * gu[0] + b[1] * gu[1]) * vals[static_cast<std::size_t>(j)] +
                       sig * u * vals[static_cast<std::size_t>(j)]));
      }
    }
  }
  // Neumann boundary load, evaluated analytically.
  if (!problem.neumann_tags.empty() && problem.neumann) {
    WeakForm loader(
        [&] {
          ProblemDefinition p;
          p.neumann = problem.neumann;
          p.neumann_tags = problem.neumann_tags;
          p.dirichlet_tags = problem.dirichlet_tags;
          return p;
        }(),
        test, test, quad_degree);
    r += loader.residual(Vec::Zero(space.dof_count()));
  }
  return r;
}

FEFunction offset_function(const ScalarField& g, const FESpacePtr& space, OffsetMode mode) {
  if (space->dirichlet_tags.empty()) throw std::invalid_argument("offset function requires Dirichlet tags");
  FEFunction bar;
  bar.space = space;
  bar.values = Vec::Zero(space->dof_count());
  for (int d = 0; d < space->dof_count(); ++d) {
    if (!space->dirichlet_mask[static_cast<std::size_t>(d)]) continue;
    const Point& x = space->dof_coords[static_cast<std::size_t>(d)];
    const double v = g(x[0], x[1]);
    if (!std::isfinite(v)) throw NumericError("Dirichlet data not finite at node " + std::to_string(d));
    bar.values(d) = v;
  }
  if (mode == OffsetMode::ZeroExtension) return bar;

  // Discrete harmonic extension: unit-diffusion solve lifting g inward.
  ProblemDefinition laplace;
  laplace.kappa = [](double, double) { return 1.0; };
  laplace.dirichlet_tags = space->dirichlet_tags;
  WeakForm wf(laplace, space, space);
  const Vec rhs = wf.residual(bar.values);
  const Factorization F = factorize(wf.system_matrix(), true);
  const Vec interior = F.solve(rhs);
  for (int i = 0; i < space->free_count(); ++i) bar.values(space->free_dofs[static_cast<std::size_t>(i)]) += interior(i);
  return bar;
}

} // namespace feinn
