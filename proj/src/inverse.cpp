#include "feinn/inverse.hpp"

#include "feinn/rng.hpp"

#include <algorithm>
#include <cmath>

namespace feinn {

namespace {

constexpr double kLocateTol = 1e-10;

bool invert_cell_map(const Mesh& mesh, int c, const Point& x, Point& ref) {
  const Cell& cell = mesh.cells[static_cast<std::size_t>(c)];
  switch (cell.shape) {
    case CellShape::Segment: {
      const double a = mesh.vertices[static_cast<std::size_t>(cell.vertices[0])][0];
      const double b = mesh.vertices[static_cast<std::size_t>(cell.vertices[1])][0];
      ref = {2.0 * (x[0] - a) / (b - a) - 1.0, 0.0};
      return std::abs(ref[0]) <= 1.0 + kLocateTol;
    }
    case CellShape::Tri: {
      const Mesh::MapPoint mp = mesh.map_cell(c, {0.0, 0.0});
      const double rx = x[0] - mp.x[0], ry = x[1] - mp.x[1];
      const double inv = 1.0 / mp.det;
      ref = {inv * (mp.jac[1][1] * rx - mp.jac[1][0] * ry), inv * (-mp.jac[0][1] * rx + mp.jac[0][0] * ry)};
      return ref[0] >= -kLocateTol && ref[1] >= -kLocateTol && ref[0] + ref[1] <= 1.0 + kLocateTol;
    }
    case CellShape::Quad: {
      ref = {0.0, 0.0};
      for (int it = 0; it < 30; ++it) {
        const Mesh::MapPoint mp = mesh.map_cell(c, ref);
        const double rx = x[0] - mp.x[0], ry = x[1] - mp.x[1];
        if (std::abs(rx) + std::abs(ry) < 1e-14) break;
        const double inv = 1.0 / (mp.jac[0][0] * mp.jac[1][1] - mp.jac[0][1] * mp.jac[1][0]);
        ref[0] += inv * (mp.jac[1][1] * rx - mp.jac[1][0] * ry);
        ref[1] += inv * (-mp.jac[0][1] * rx + mp.jac[0][0] * ry);
        ref[0] = std::clamp(ref[0], -2.0, 2.0);
        ref[1] = std::clamp(ref[1], -2.0, 2.0);
      }
      return std::abs(ref[0]) <= 1.0 + kLocateTol && std::abs(ref[1]) <= 1.0 + kLocateTol;
    }
  }
  return false;
}

} // namespace

std::pair<int, Point> locate_point(const Mesh& mesh, const Point& point) {
  Point ref;
  for (int c = 0; c < static_cast<int>(mesh.cells.size()); ++c) {
    // Cheap bounding-box rejection before inverting the map.
    const Cell& cell = mesh.cells[static_cast<std::size_t>(c)];
    double xlo = 1e300, xhi = -1e300, ylo = 1e300, yhi = -1e300;
    for (int v = 0; v < cell.vertex_count(); ++v) {
      const Point& p = mesh.vertices[static_cast<std::size_t>(cell.vertices[static_cast<std::size_t>(v)])];
      xlo = std::min(xlo, p[0]);
      xhi = std::max(xhi, p[0]);
      ylo = std::min(ylo, p[1]);
      yhi = std::max(yhi, p[1]);
    }
    const double pad = 1e-9 + 1e-9 * (std::abs(xhi) + std::abs(yhi));
    if (point[0] < xlo - pad || point[0] > xhi + pad) continue;
    if (mesh.dim > 1 && (point[1] < ylo - pad || point[1] > yhi + pad)) continue;
    if (invert_cell_map(mesh, c, point, ref)) return {c, ref};
  }
  throw std::invalid_argument("observation point (" + std::to_string(point[0]) + ", " + std::to_string(point[1]) +
                              ") lies outside the mesh");
}

MeasurementOperator::MeasurementOperator(FESpacePtr space, std::vector<Point> points)
    : space_(std::move(space)), points_(std::move(points)) {
  tables_.reserve(points_.size());
  std::vector<double> vals;
  for (const Point& p : points_) {
    const auto [c, ref] = locate_point(*space_->mesh, p);
    const Cell& cell = space_->mesh->cells[static_cast<std::size_t>(c)];
    ReferenceElement::get(cell.shape, space_->order).eval(ref, vals, nullptr);
    cells_.push_back(c);
    tables_.push_back(vals);
  }
}

Vec MeasurementOperator::apply(const Vec& full_values) const {
  Vec out(size());
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const int* dofs = space_->cell_dof_ptr(cells_[i]);
    double v = 0.0;
    for (std::size_t j = 0; j < tables_[i].size(); ++j) v += tables_[i][j] * full_values(dofs[j]);
    out(static_cast<Eigen::Index>(i)) = v;
  }
  return out;
}

Vec MeasurementOperator::vjp(const Vec& w) const {
  Vec out = Vec::Zero(space_->dof_count());
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const int* dofs = space_->cell_dof_ptr(cells_[i]);
    for (std::size_t j = 0; j < tables_[i].size(); ++j) out(dofs[j]) += tables_[i][j] * w(static_cast<Eigen::Index>(i));
  }
  return out;
}

Vec measure(const FEFunction& u, const std::vector<Point>& points) {
  return MeasurementOperator(u.space, points).apply(u.values);
}

Vec add_noise(const Vec& values, double sigma, std::uint64_t seed) {
  if (sigma < 0.0) throw std::invalid_argument("noise level must be >= 0");
  if (sigma == 0.0) return values;
  Rng rng(seed);
  Vec out = values;
  for (Eigen::Index i = 0; i < out.size(); ++i) out(i) += sigma * rng.normal();
  return out;
}

InverseModel::InverseModel(const InverseConfig& config) : config_(config) {
  config_.plan.check();
  config_.state_arch.check();

  // Dirichlet tags that stay strongly enforced on the trial space: unknown
  // traces are left free (the state network covers those nodes too).
  std::vector<std::string> trace_tags;
  for (const UnknownFieldSpec& u : config_.unknowns)
    if (u.target == UnknownTarget::DirichletTrace)
      trace_tags.insert(trace_tags.end(), u.tags.begin(), u.tags.end());
  std::vector<std::string> trial_tags;
  for (const std::string& t : config_.problem.dirichlet_tags)
    if (std::find(trace_tags.begin(), trace_tags.end(), t) == trace_tags.end()) trial_tags.push_back(t);

  trial_ = lagrangian_space(config_.mesh, config_.order, trial_tags);
  test_ = lagrangian_space(config_.mesh, config_.order, config_.problem.dirichlet_tags);

  if (!trial_tags.empty() && config_.problem.dirichlet) {
    offset_ = offset_function(config_.problem.dirichlet, trial_, OffsetMode::ZeroExtension);
  } else {
    offset_.space = trial_;
    offset_.values = Vec::Zero(trial_->dof_count());
  }

  wf_ = std::make_unique<WeakForm>(config_.problem, trial_, test_);
  for (const UnknownFieldSpec& u : config_.unknowns) {
    if (u.target != UnknownTarget::DirichletTrace) u.arch.check();
    switch (u.target) {
      case UnknownTarget::Kappa:
        wf_->set_unknown(CoefficientId::Kappa);
        field_ids_.push_back(CoefficientId::Kappa);
        break;
      case UnknownTarget::EtaNeumann:
        wf_->set_unknown_neumann(u.tags);
        field_ids_.push_back(CoefficientId::Neumann);
        break;
      case UnknownTarget::DirichletTrace:
        field_ids_.push_back(CoefficientId::Kappa); // placeholder, no values
        break;
    }
  }

  D_ = std::make_unique<MeasurementOperator>(trial_, config_.observations.points);
  if (config_.observations.values.size() != D_->size())
    throw std::invalid_argument("observation points/values length mismatch");

  std::vector<Point> coords(static_cast<std::size_t>(trial_->free_count()));
  for (int i = 0; i < trial_->free_count(); ++i)
    coords[static_cast<std::size_t>(i)] = trial_->dof_coords[static_cast<std::size_t>(trial_->free_dofs[static_cast<std::size_t>(i)])];
  state_points_ = points_matrix(coords, config_.mesh->dim);

  field_offsets_.clear();
  for (std::size_t i = 0; i < config_.unknowns.size(); ++i) {
    const UnknownFieldSpec& u = config_.unknowns[i];
    field_offsets_.push_back(field_size_);
    if (u.target == UnknownTarget::DirichletTrace) {
      field_points_.emplace_back(0, config_.mesh->dim);
      continue;
    }
    field_size_ += u.arch.param_count();
    field_points_.push_back(points_matrix(wf_->coefficient_points(field_ids_[i]), config_.mesh->dim));
  }
  field_offsets_.push_back(field_size_);
}

Vec InverseModel::field_theta_slice(const Vec& theta_fields, std::size_t which) const {
  return theta_fields.segment(field_offsets_[which], field_offsets_[which + 1] - field_offsets_[which]);
}

Vec InverseModel::field_values(std::size_t which, const Vec& theta_fields) const {
  const UnknownFieldSpec& u = config_.unknowns[which];
  if (u.target == UnknownTarget::DirichletTrace) return Vec();
  return forward(u.arch, field_theta_slice(theta_fields, which), field_points_[which]);
}

void InverseModel::apply_fields(const Vec& theta_fields) const {
  for (std::size_t i = 0; i < config_.unknowns.size(); ++i) {
    if (config_.unknowns[i].target == UnknownTarget::DirichletTrace) continue;
    wf_->set_coefficient_values(field_ids_[i], field_values(i, theta_fields));
  }
}

FEFunction InverseModel::state_function(const Vec& theta_u) const {
  FEFunction u = offset_;
  const Vec v = forward(config_.state_arch, theta_u, state_points_);
  for (int i = 0; i < trial_->free_count(); ++i)
    u.values(trial_->free_dofs[static_cast<std::size_t>(i)]) += v(i);
  return u;
}

double InverseModel::loss_and_grad(const Vec& theta_u, const Vec& theta_fields, double alpha, bool with_misfit,
                                   bool with_residual, Vec* grad_u, Vec* grad_fields, double* misfit_out,
                                   double* residual_out) const {
  const FEFunction u = state_function(theta_u);
  double value = 0.0;
  Vec du = Vec::Zero(trial_->free_count());
  double misfit_norm = 0.0, residual_l1 = 0.0;

  if (with_misfit) {
    const Vec e = config_.observations.values - D_->apply(u.values);
    misfit_norm = e.norm();
    value += misfit_norm;
    if (grad_u && misfit_norm > 0.0) {
      const Vec full = D_->vjp(e / misfit_norm);
      for (int i = 0; i < trial_->free_count(); ++i) du(i) -= full(trial_->free_dofs[static_cast<std::size_t>(i)]);
    }
  }

  if (with_residual) {
    apply_fields(theta_fields);
    const Vec r = wf_->residual(u.values);
    residual_l1 = r.lpNorm<1>();
    value += alpha * residual_l1;
    const Vec w = alpha * r.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
    if (grad_u) du += wf_->vjp_state(u.values, w);
    if (grad_fields) {
      *grad_fields = Vec::Zero(field_size_);
      for (std::size_t i = 0; i < config_.unknowns.size(); ++i) {
        const UnknownFieldSpec& uf = config_.unknowns[i];
        if (uf.target == UnknownTarget::DirichletTrace) continue;
        const Vec dlam = wf_->vjp_coefficient(field_ids_[i], u.values, w);
        grad_fields->segment(field_offsets_[i], field_offsets_[i + 1] - field_offsets_[i]) =
            vjp_params(uf.arch, field_theta_slice(theta_fields, i), field_points_[i], dlam);
      }
    }
  } else if (grad_fields) {
    *grad_fields = Vec::Zero(field_size_);
  }

  if (grad_u) *grad_u = vjp_params(config_.state_arch, theta_u, state_points_, du);
  if (misfit_out) *misfit_out = misfit_norm;
  if (residual_out) *residual_out = residual_l1;
  return value;
}

double InverseModel::loss(const Vec& theta_u, const Vec& theta_fields, double alpha) const {
  return loss_and_grad(theta_u, theta_fields, alpha, true, true, nullptr, nullptr);
}

std::pair<Vec, Vec> InverseModel::grad(const Vec& theta_u, const Vec& theta_fields, double alpha) const {
  Vec gu, gf;
  loss_and_grad(theta_u, theta_fields, alpha, true, true, &gu, &gf);
  return {gu, gf};
}

namespace {

struct ErrorTracker {
  const InverseConfig* config;
  const InverseModel* model;
  int error_degree;

  void fill(InverseReportRow& row, const Vec& theta_u, const Vec& theta_fields) const {
    const FEFunction u = model->state_function(theta_u);
    if (config->exact_u) {
      const ErrorNorms e = error_norms(config->exact_u, config->exact_grad_u, u, error_degree);
      const ErrorNorms base = function_norms(config->exact_u, config->exact_grad_u, *config->mesh, error_degree);
      row.eps_l2_u = e.l2 / base.l2;
      row.eps_h1_u = e.h1 / base.h1;
    } else if (config->truth_fe) {
      FEFunction diff = u;
      diff.values -= config->truth_fe->values;
      const ErrorNorms e = fe_function_norms(diff, error_degree);
      const ErrorNorms base = fe_function_norms(*config->truth_fe, error_degree);
      row.eps_l2_u = e.l2 / base.l2;
      row.eps_h1_u = e.h1 / base.h1;
    }
    if (config->exact_kappa) {
      for (std::size_t i = 0; i < model->unknowns().size(); ++i) {
        if (model->unknowns()[i].target != UnknownTarget::Kappa) continue;
        const MLP net{model->unknowns()[i].arch, model->field_theta_slice(theta_fields, i)};
        const ErrorNorms e =
            error_norms_nn(config->exact_kappa, nullptr, net, *config->mesh, error_degree);
        const ErrorNorms base = function_norms(config->exact_kappa, nullptr, *config->mesh, error_degree);
        row.eps_l2_field = e.l2 / base.l2;
      }
    }
  }
};

} // namespace

InverseResult train_inverse(const InverseConfig& config) {
  InverseModel model(config);
  const int error_degree = 2 * config.order + 5;
  ErrorTracker tracker{&config, &model, error_degree};

  InverseResult result;
  Vec theta_u = glorot_init(config.state_arch, config.state_seed);
  Vec theta_fields = Vec::Zero(model.field_size());
  {
    Eigen::Index off = 0;
    for (const UnknownFieldSpec& u : config.unknowns) {
      if (u.target == UnknownTarget::DirichletTrace) continue;
      const Vec init = glorot_init(u.arch, u.seed);
      theta_fields.segment(off, init.size()) = init;
      off += init.size();
    }
  }

  int global_iter = 0;
  auto record = [&](int step, double alpha, double f, const Vec& tu, const Vec& tf, double misfit, double resid) {
    if (config.history_stride > 1 && global_iter % config.history_stride != 0) return;
    InverseReportRow row;
    row.iter = global_iter;
    row.step = step;
    row.alpha = alpha;
    row.loss = f;
    row.misfit = misfit;
    row.residual_l1 = resid;
    tracker.fill(row, tu, tf);
    result.report.push_back(row);
  };

  BfgsOptions opts;
  opts.grad_tol = config.grad_tol;

  // Step 1: data fitting of the state network.
  if (config.plan.n1 > 0) {
    opts.max_iters = config.plan.n1;
    BfgsResult r1 = bfgs_minimize(
        [&](const Vec& t, Vec& g) {
          double value = model.loss_and_grad(t, theta_fields, 0.0, true, false, &g, nullptr);
          return value;
        },
        theta_u, opts,
        [&](int, const Vec& x, double f) {
          ++global_iter;
          record(1, 0.0, f, x, theta_fields, f, 0.0);
        });
    theta_u = r1.x;
    result.step_status.push_back(r1.status);
  }

  // Step 2: field initialization on the residual with the state frozen.
  if (config.plan.n2 > 0 && model.field_size() > 0) {
    opts.max_iters = config.plan.n2;
    BfgsResult r2 = bfgs_minimize(
        [&](const Vec& t, Vec& g) {
          double value = model.loss_and_grad(theta_u, t, 1.0, false, true, nullptr, &g);
          return value;
        },
        theta_fields, opts,
        [&](int, const Vec& x, double f) {
          ++global_iter;
          record(2, 0.0, f, theta_u, x, 0.0, f);
        });
    theta_fields = r2.x;
    result.step_status.push_back(r2.status);
  }

  // Step 3: coupled sub-steps over the penalty schedule, both parameter
  // blocks in one optimization vector, optimizer state reset per sub-step.
  for (std::size_t sub = 0; sub < config.plan.alphas.size(); ++sub) {
    if (config.plan.n3 <= 0) break;
    const double alpha = config.plan.alphas[sub];
    Vec joint(theta_u.size() + theta_fields.size());
    joint << theta_u, theta_fields;
    opts.max_iters = config.plan.n3;
    double last_misfit = 0.0, last_resid = 0.0; // from the most recent evaluation
    BfgsResult r3 = bfgs_minimize(
        [&](const Vec& t, Vec& g) {
          const Vec tu = t.head(theta_u.size());
          const Vec tf = t.tail(theta_fields.size());
          Vec gu, gf;
          const double value =
              model.loss_and_grad(tu, tf, alpha, true, true, &gu, &gf, &last_misfit, &last_resid);
          g.resize(t.size());
          g << gu, gf;
          return value;
        },
        joint, opts,
        [&](int, const Vec& x, double f) {
          ++global_iter;
          record(3, alpha, f, x.head(theta_u.size()), x.tail(theta_fields.size()), last_misfit, last_resid);
        });
    theta_u = r3.x.head(theta_u.size());
    theta_fields = r3.x.tail(theta_fields.size());
    result.step_status.push_back(r3.status);
  }

  result.state = MLP{config.state_arch, theta_u};
  for (std::size_t i = 0; i < config.unknowns.size(); ++i) {
    if (config.unknowns[i].target == UnknownTarget::DirichletTrace) continue;
    result.fields.push_back(MLP{config.unknowns[i].arch, model.field_theta_slice(theta_fields, i)});
    const CoefficientId id = config.unknowns[i].target == UnknownTarget::Kappa ? CoefficientId::Kappa
                                                                               : CoefficientId::Neumann;
    result.field_points.push_back(model.weak_form().coefficient_points(id));
    result.field_final_values.push_back(model.field_values(i, theta_fields));
  }
  result.state_solution = model.state_function(theta_u);

  InverseReportRow final_row;
  tracker.fill(final_row, theta_u, theta_fields);
  result.eps_l2_u = final_row.eps_l2_u;
  result.eps_h1_u = final_row.eps_h1_u;
  result.eps_l2_field = final_row.eps_l2_field;
  if (config.exact_u) {
    const ErrorNorms e = error_norms_nn(config.exact_u, config.exact_grad_u, result.state, *config.mesh, error_degree);
    const ErrorNorms base = function_norms(config.exact_u, config.exact_grad_u, *config.mesh, error_degree);
    result.eps_l2_u_nn = e.l2 / base.l2;
  }
  return result;
}

InverseConfig ihcp_setup(const MeshPtr& mesh, const ObservationSet& observations, const MLPArchitecture& state_arch,
                         std::uint64_t state_seed, const MLPArchitecture& eta_arch, std::uint64_t eta_seed) {
  if (mesh->tag_id("inner") < 0 || mesh->tag_id("outer") < 0 || mesh->tag_id("flat") < 0)
    throw std::invalid_argument("the conduction setup expects inner/outer/flat boundary tags");

  InverseConfig config;
  config.mesh = mesh;
  config.order = 1;
  config.state_arch = state_arch;
  config.state_seed = state_seed;
  config.observations = observations;

  config.problem.kappa = [](double x, double y) { return std::hypot(x, y) < 0.08 ? 1.0 : 100.0; };
  config.problem.dirichlet_tags = {"inner"};
  config.problem.neumann_tags = {"outer", "flat"};
  // The flats lie on y = 0; every outer-arc quadrature point has y >> 0.
  config.problem.neumann = [](double x, double y) {
    if (std::abs(y) < 1e-6) return 0.0;
    return -100.0 - 50.0 * std::sin(std::atan2(y, x));
  };

  UnknownFieldSpec trace;
  trace.target = UnknownTarget::DirichletTrace;
  trace.tags = {"inner"};
  config.unknowns.push_back(trace);

  UnknownFieldSpec flux;
  flux.target = UnknownTarget::EtaNeumann;
  flux.arch = eta_arch;
  flux.seed = eta_seed;
  flux.tags = {"outer"};
  config.unknowns.push_back(flux);

  config.exact_eta = [](double x, double y) { return -100.0 - 50.0 * std::sin(std::atan2(y, x)); };
  return config;
}

} // namespace feinn
