#include "feinn/forward.hpp"

#include <cmath>

namespace feinn {

namespace {

Vec sign_of(const Vec& z) {
  return z.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

// Mesh chain from the trial mesh to the linearized test mesh, splitting the
// order into prime refinement factors (richer multigrid lineage, identical
// final lattice).
std::vector<MeshPtr> refine_chain(const MeshPtr& mesh, int factor) {
  std::vector<MeshPtr> chain;
  MeshPtr m = mesh;
  int k = factor;
  for (int p = 2; k > 1; ++p) {
    while (k % p == 0) {
      m = uniform_refine(m, p);
      chain.push_back(m);
      k /= p;
    }
  }
  return chain;
}

} // namespace

FEFunction fem_solve(const ProblemDefinition& problem, const FESpacePtr& trial, const FESpacePtr& test,
                     int quad_degree) {
  if (trial->free_count() != test->free_count())
    throw std::invalid_argument("trial and test spaces must have equal free dimension");
  FEFunction u;
  if (trial->dirichlet_tags.empty() || !problem.dirichlet) {
    u.space = trial;
    u.values = Vec::Zero(trial->dof_count());
  } else {
    u = offset_function(problem.dirichlet, trial, OffsetMode::ZeroExtension);
  }
  WeakForm wf(problem, trial, test, quad_degree);
  const Vec b = wf.residual(u.values);
  const Factorization F = factorize(wf.system_matrix(), false);
  const Vec x = F.solve(b);
  if (!x.allFinite()) throw SingularMatrixError("direct solve produced non-finite values (ill-posed configuration?)");
  for (int i = 0; i < trial->free_count(); ++i) u.values(trial->free_dofs[static_cast<std::size_t>(i)]) += x(i);
  return u;
}

ForwardModel::ForwardModel(const ForwardConfig& config) : config_(config) {
  config_.norm.check();
  config_.arch.check();
  if (config_.arch.input_dim() != config_.mesh->dim)
    throw std::invalid_argument("network input width does not match mesh dimension");

  trial_ = lagrangian_space(config_.mesh, config_.order, config_.problem.dirichlet_tags);
  std::vector<MeshPtr> test_chain; // intermediate meshes between trial and test
  if (config_.petrov_galerkin && config_.order > 1) {
    test_chain = refine_chain(config_.mesh, config_.order);
    test_ = lagrangian_space(test_chain.back(), 1, config_.problem.dirichlet_tags);
  } else if (config_.petrov_galerkin) {
    test_ = lagrangian_space(config_.mesh, 1, config_.problem.dirichlet_tags);
  } else {
    test_ = lagrangian_space(config_.mesh, config_.order, config_.problem.dirichlet_tags);
  }
  if (trial_->free_count() != test_->free_count())
    throw std::invalid_argument("trial/test free dimensions differ; check Dirichlet tags");

  if (!trial_->dirichlet_tags.empty() && config_.problem.dirichlet) {
    offset_ = offset_function(config_.problem.dirichlet, trial_, config_.offset_mode);
  } else {
    offset_.space = trial_;
    offset_.values = Vec::Zero(trial_->dof_count());
  }

  WeakForm wf(config_.problem, trial_, test_);
  A_ = wf.system_matrix();
  b_ = wf.residual(offset_.values);

  std::vector<Point> coords(static_cast<std::size_t>(trial_->free_count()));
  for (int i = 0; i < trial_->free_count(); ++i)
    coords[static_cast<std::size_t>(i)] = trial_->dof_coords[static_cast<std::size_t>(trial_->free_dofs[static_cast<std::size_t>(i)])];
  eval_points_ = points_matrix(coords, config_.mesh->dim);

  node_factor_ = Vec::Ones(trial_->free_count());
  if (config_.variant == SolverVariant::Ivpinn) {
    if (!config_.distance) throw std::invalid_argument("product variant requires a distance function");
    // The distance function must vanish on the Dirichlet boundary.
    for (int d = 0; d < trial_->dof_count(); ++d) {
      if (!trial_->dirichlet_mask[static_cast<std::size_t>(d)]) continue;
      const Point& x = trial_->dof_coords[static_cast<std::size_t>(d)];
      if (std::abs(config_.distance(x[0], x[1])) > 1e-12)
        throw std::invalid_argument("distance function does not vanish on a Dirichlet node");
    }
    for (int i = 0; i < trial_->free_count(); ++i)
      node_factor_(i) = config_.distance(eval_points_(i, 0), config_.mesh->dim > 1 ? eval_points_(i, 1) : 0.0);
  }

  switch (config_.norm.preconditioner) {
    case PreconditionerKind::None:
      break;
    case PreconditionerKind::Mass: {
      const SparseMatrix M = assemble_matrix(MatrixKind::Mass, test_, test_, config_.problem);
      pre_fact_.emplace(factorize(M, true));
      pre_self_adjoint_ = true;
      break;
    }
    case PreconditionerKind::ExactLinear: {
      WeakForm lin(config_.problem, test_, test_);
      pre_fact_.emplace(factorize(lin.system_matrix(), false));
      pre_self_adjoint_ = false;
      break;
    }
    case PreconditionerKind::ExactTrial: {
      pre_fact_.emplace(factorize(A_, false));
      pre_self_adjoint_ = false;
      break;
    }
    case PreconditionerKind::Gmg: {
      std::vector<FESpacePtr> spaces;
      for (const MeshPtr& m : config_.mesh_chain)
        spaces.push_back(lagrangian_space(m, 1, config_.problem.dirichlet_tags));
      spaces.push_back(lagrangian_space(config_.mesh, 1, config_.problem.dirichlet_tags));
      for (const MeshPtr& m : test_chain) spaces.push_back(lagrangian_space(m, 1, config_.problem.dirichlet_tags));
      if (config_.petrov_galerkin) spaces.back() = test_; // share the exact test space at the finest level
      if (spaces.size() < 2) throw std::invalid_argument("multigrid preconditioning needs a mesh chain");
      GMGOptions gopts;
      gopts.cycles = config_.norm.gmg_cycles;
      gmg_.emplace(config_.problem, std::move(spaces), gopts);
      if (gmg_->finest_size() != test_->free_count())
        throw std::invalid_argument("multigrid hierarchy does not end at the test space");
      break;
    }
  }
  if (config_.norm.outer_norm == OuterNorm::H1)
    riesz_ = assemble_matrix(MatrixKind::RieszH1, test_, test_, config_.problem);
}

Vec ForwardModel::tilde_values(const Vec& theta) const {
  const Vec v = forward(config_.arch, theta, eval_points_);
  return node_factor_.cwiseProduct(v);
}

Vec ForwardModel::residual_of(const Vec& theta) const { return b_ - A_ * tilde_values(theta); }

Vec ForwardModel::precondition(const Vec& r) const {
  switch (config_.norm.preconditioner) {
    case PreconditionerKind::None: return r;
    case PreconditionerKind::Gmg: return gmg_->apply(r);
    default: return pre_fact_->solve(r);
  }
}

Vec ForwardModel::precondition_transpose(const Vec& z) const {
  switch (config_.norm.preconditioner) {
    case PreconditionerKind::None: return z;
    case PreconditionerKind::Gmg: return gmg_->apply_transpose(z);
    default: return pre_self_adjoint_ ? pre_fact_->solve(z) : pre_fact_->solve_transpose(z);
  }
}

double ForwardModel::loss(const Vec& theta) const {
  const Vec z = precondition(residual_of(theta));
  if (config_.norm.outer_norm == OuterNorm::H1) return std::sqrt(z.dot(*riesz_ * z));
  return config_.norm.vector_norm == VectorNorm::L1 ? z.lpNorm<1>() : z.norm();
}

double ForwardModel::loss_and_grad(const Vec& theta, Vec& grad_out) const {
  const Vec r = residual_of(theta);
  // At the global minimum the residual is numerically zero and the norm has
  // no gradient; report convergence instead of dividing by ~0.
  if (r.lpNorm<Eigen::Infinity>() <= 1e-12 * (1.0 + b_.lpNorm<Eigen::Infinity>())) {
    grad_out = Vec::Zero(theta.size());
    const Vec z0 = precondition(r);
    return config_.norm.vector_norm == VectorNorm::L1 ? z0.lpNorm<1>() : z0.norm();
  }
  const Vec z = precondition(r);
  double value;
  Vec dz;
  if (config_.norm.outer_norm == OuterNorm::H1) {
    const Vec Rz = *riesz_ * z;
    value = std::sqrt(z.dot(Rz));
    dz = value > 0.0 ? Vec(Rz / value) : Vec(Vec::Zero(z.size()));
  } else if (config_.norm.vector_norm == VectorNorm::L1) {
    value = z.lpNorm<1>();
    dz = sign_of(z);
  } else {
    value = z.norm();
    dz = value > 0.0 ? Vec(z / value) : Vec(Vec::Zero(z.size()));
  }
  if (value == 0.0) {
    grad_out = Vec::Zero(theta.size());
    return 0.0;
  }
  const Vec w_r = precondition_transpose(dz);
  const Vec w_u = -(A_.transpose_times(w_r));
  grad_out = vjp_params(config_.arch, theta, eval_points_, node_factor_.cwiseProduct(w_u));
  return value;
}

Vec ForwardModel::grad(const Vec& theta) const {
  Vec g;
  loss_and_grad(theta, g);
  return g;
}

FEFunction ForwardModel::interpolated(const Vec& theta) const {
  FEFunction u = offset_;
  const Vec tilde = tilde_values(theta);
  for (int i = 0; i < trial_->free_count(); ++i)
    u.values(trial_->free_dofs[static_cast<std::size_t>(i)]) += tilde(i);
  return u;
}

const FEFunction& ForwardModel::fem_solution() const {
  if (!fem_) fem_ = fem_solve(config_.problem, trial_, test_);
  return *fem_;
}

ForwardResult train_forward(const ForwardConfig& config) {
  ForwardModel model(config);
  const int error_degree = 2 * config.order + 5;

  ForwardResult result;
  result.net.arch = config.arch;
  Vec theta0 = glorot_init(config.arch, config.seed);

  auto record = [&](int iter, const Vec& theta, double f) {
    if (config.history_stride > 1 && iter % config.history_stride != 0 && iter != 0) return;
    HistoryRow row;
    row.iter = iter;
    row.loss = f;
    if (config.exact) {
      const FEFunction u = model.interpolated(theta);
      const ErrorNorms e = error_norms(config.exact, config.exact_grad, u, error_degree);
      row.l2_interp = e.l2;
      row.h1_interp = e.h1;
      if (config.log_nn_errors && config.variant == SolverVariant::Feinn) {
        const MLP net{config.arch, theta};
        const ErrorNorms en = error_norms_nn(config.exact, config.exact_grad, net, *config.mesh, error_degree);
        row.l2_nn = en.l2;
        row.h1_nn = en.h1;
      }
    }
    result.history.push_back(row);
  };

  BfgsOptions opts;
  opts.max_iters = config.max_iters;
  opts.grad_tol = config.grad_tol;
  if (config.arch.param_count() > config.dense_bfgs_limit) opts.lbfgs_memory = 20;

  Vec scratch;
  record(0, theta0, model.loss(theta0));
  BfgsResult opt = bfgs_minimize([&](const Vec& t, Vec& g) { return model.loss_and_grad(t, g); }, theta0, opts,
                                 [&](int iter, const Vec& x, double f) { record(iter, x, f); });

  result.net.theta = opt.x;
  result.solution = model.interpolated(opt.x);
  result.opt = std::move(opt);

  if (config.exact) {
    result.errors_interp = error_norms(config.exact, config.exact_grad, result.solution, error_degree);
    if (config.variant == SolverVariant::Feinn)
      result.errors_nn = error_norms_nn(config.exact, config.exact_grad, result.net, *config.mesh, error_degree);
    result.errors_fem = error_norms(config.exact, config.exact_grad, model.fem_solution(), error_degree);
  }
  FEFunction diff = result.solution;
  diff.values -= model.fem_solution().values;
  const double fem_norm = fe_function_norms(model.fem_solution(), error_degree).l2;
  result.rel_distance_to_fem = fe_function_norms(diff, error_degree).l2 / fem_norm;
  return result;
}

} // namespace feinn
