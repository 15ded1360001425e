#include "feinn/runner.hpp"

#include "feinn/parallel.hpp"
#include "feinn/registry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace feinn {

double fit_rate(const std::vector<double>& errors, const std::vector<double>& spacings) {
  if (errors.size() != spacings.size() || errors.size() < 2)
    throw std::invalid_argument("rate fit needs at least two (error, spacing) pairs");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!(errors[i] > 0.0) || !(spacings[i] > 0.0))
      throw std::invalid_argument("rate fit requires positive errors and spacings");
    const double x = std::log(spacings[i]), y = std::log(errors[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double n = static_cast<double>(errors.size());
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

class CsvFile {
public:
  CsvFile(const std::filesystem::path& path, const std::string& header, std::vector<std::string>& files)
      : out_(path) {
    if (!out_) throw IoError("cannot open output file: " + path.string());
    out_ << header << "\n";
    files.push_back(path.string());
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << "\n";
  }

private:
  std::ofstream out_;
};

MLPArchitecture make_arch(int dim, const std::vector<int>& hidden, Activation act,
                          Rectifier rect = Rectifier::None) {
  MLPArchitecture a;
  a.widths.push_back(dim);
  for (int h : hidden) a.widths.push_back(h);
  a.widths.push_back(1);
  a.activation = act;
  a.rectifier = rect;
  return a;
}

// Cartesian mesh built through a power-of-two refinement chain so a multigrid
// hierarchy can reuse the intermediate levels.
std::pair<MeshPtr, std::vector<MeshPtr>> square_mesh_with_chain(int n, bool with_chain) {
  if (!with_chain) return {cartesian_mesh({0.0, 0.0}, {1.0, 1.0}, {n, n}), {}};
  int base = n;
  int splits = 0;
  while (base % 2 == 0 && base / 2 >= 4) {
    base /= 2;
    ++splits;
  }
  std::vector<MeshPtr> chain;
  MeshPtr mesh = cartesian_mesh({0.0, 0.0}, {1.0, 1.0}, {base, base});
  for (int i = 0; i < splits; ++i) {
    chain.push_back(mesh);
    mesh = uniform_refine(mesh, 2);
  }
  return {mesh, chain};
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

struct ForwardRunner {
  const RunSpec& spec;
  const RegisteredProblem reg;
  std::filesystem::path out;
  RunReport& report;
  std::ostringstream& log;

  void run_all() {
    CsvFile summary(out / (spec.label + "summary.csv"),
                    "problem,variant,order,mesh,h,seed,loss,iters,status,l2_interp,h1_interp,l2_nn,h1_nn,l2_fem,"
                    "h1_fem,rel_dist_fem",
                    report.files);
    std::vector<std::array<std::string, 5>> rate_rows;

    const std::string variant_name = spec.variant == SolverVariant::FemOnly ? "fem"
                                     : spec.variant == SolverVariant::Ivpinn ? "ivpinn"
                                                                             : "feinn";
    for (int order : spec.orders) {
      std::vector<double> spacings, fem_l2, fem_h1, feinn_l2, feinn_h1;
      for (int n : spec.meshes) {
        auto [mesh, chain] = make_mesh(n);
        const double h = 1.0 / n;
        const int error_degree = 2 * order + 5;

        ProblemDefinition problem = reg.problem;
        if (reg.geometry == GeometryKind::Imported) {
          problem.dirichlet_tags = mesh->boundary_tag_names; // whole boundary
          problem.neumann_tags.clear();
        }

        // Reference FEM numbers on every level (also what the trained runs
        // are compared against).
        FESpacePtr trial = lagrangian_space(mesh, order, problem.dirichlet_tags);
        FESpacePtr test = spec.petrov_galerkin ? linearized_test_space(trial)
                                               : lagrangian_space(mesh, order, problem.dirichlet_tags);
        const FEFunction u_fem = fem_solve(problem, trial, test);
        const ErrorNorms fem_err = error_norms(reg.exact_u, reg.exact_grad_u, u_fem, error_degree);
        summary.row({spec.problem_id, "fem", std::to_string(order), std::to_string(n), fmt(h), "", "", "", "ok",
                     "", "", "", "", fmt(fem_err.l2), fmt(fem_err.h1), ""});
        spacings.push_back(h);
        fem_l2.push_back(fem_err.l2);
        fem_h1.push_back(fem_err.h1);

        if (spec.variant == SolverVariant::FemOnly) continue;

        std::vector<double> seed_l2, seed_h1;
        for (std::uint64_t seed : spec.seeds) {
          try {
            ForwardConfig fc;
            fc.problem = problem;
            fc.mesh = mesh;
            fc.mesh_chain = chain;
            fc.order = order;
            fc.petrov_galerkin = spec.petrov_galerkin;
            fc.norm = spec.norm;
            fc.arch = make_arch(mesh->dim, spec.hidden, spec.activation);
            fc.seed = seed;
            fc.offset_mode = spec.offset_mode;
            fc.variant = spec.variant;
            fc.distance = reg.distance;
            fc.max_iters = spec.max_iters;
            fc.grad_tol = spec.grad_tol;
            fc.exact = reg.exact_u;
            fc.exact_grad = reg.exact_grad_u;
            fc.history_stride = spec.history_stride;
            fc.log_nn_errors = spec.log_nn_errors;

            const ForwardResult r = train_forward(fc);
            write_history(order, n, seed, variant_name, r);
            const std::string status = r.opt.status == BfgsStatus::Converged       ? "converged"
                                       : r.opt.status == BfgsStatus::IterationLimit ? "iteration_limit"
                                                                                     : "line_search_stop";
            summary.row({spec.problem_id, variant_name, std::to_string(order), std::to_string(n), fmt(h),
                         std::to_string(seed), fmt(r.opt.f), std::to_string(r.opt.iterations), status,
                         fmt(r.errors_interp.l2), fmt(r.errors_interp.h1), fmt(r.errors_nn.l2), fmt(r.errors_nn.h1),
                         fmt(fem_err.l2), fmt(fem_err.h1), fmt(r.rel_distance_to_fem)});
            seed_l2.push_back(r.errors_interp.l2);
            seed_h1.push_back(r.errors_interp.h1);
          } catch (const std::exception& e) {
            report.numeric_failure = true;
            log << "seed " << seed << " failed: " << e.what() << "\n";
            summary.row({spec.problem_id, variant_name, std::to_string(order), std::to_string(n), fmt(h),
                         std::to_string(seed), "", "", "failed", "", "", "", "", "", "", ""});
          }
        }
        if (!seed_l2.empty()) {
          feinn_l2.push_back(median(seed_l2));
          feinn_h1.push_back(median(seed_h1));
          if (spec.seeds.size() > 1) {
            log << variant_name << " k=" << order << " n=" << n << " L2 interp min/median/max: "
                << fmt(*std::min_element(seed_l2.begin(), seed_l2.end())) << "/" << fmt(median(seed_l2)) << "/"
                << fmt(*std::max_element(seed_l2.begin(), seed_l2.end())) << "\n";
          }
        }
      }
      if (spacings.size() >= 2) {
        rate_rows.push_back({spec.problem_id, "fem", std::to_string(order), "l2", fmt(fit_rate(fem_l2, spacings))});
        rate_rows.push_back({spec.problem_id, "fem", std::to_string(order), "h1", fmt(fit_rate(fem_h1, spacings))});
        if (feinn_l2.size() == spacings.size()) {
          rate_rows.push_back(
              {spec.problem_id, variant_name, std::to_string(order), "l2", fmt(fit_rate(feinn_l2, spacings))});
          rate_rows.push_back(
              {spec.problem_id, variant_name, std::to_string(order), "h1", fmt(fit_rate(feinn_h1, spacings))});
        }
      }
    }
    if (!rate_rows.empty()) {
      CsvFile rates(out / (spec.label + "rates.csv"), "problem,variant,order,metric,slope", report.files);
      for (const auto& r : rate_rows) {
        rates.row({r[0], r[1], r[2], r[3], r[4]});
        log << "rate " << r[1] << " k=" << r[2] << " " << r[3] << " slope " << r[4] << "\n";
      }
    }
  }

  std::pair<MeshPtr, std::vector<MeshPtr>> make_mesh(int n) const {
    if (reg.geometry == GeometryKind::Imported) {
      MeshPtr mesh = import_mesh_file(spec.mesh_file);
      std::vector<MeshPtr> chain;
      // Refine the imported mesh up to the requested level; level 1 is the file.
      MeshPtr m = mesh;
      for (int i = 1; i < n; i *= 2) {
        chain.push_back(m);
        m = uniform_refine(m, 2);
      }
      if (chain.empty()) return {mesh, {}};
      return {m, chain};
    }
    return square_mesh_with_chain(n, spec.norm.preconditioner == PreconditionerKind::Gmg);
  }

  void write_history(int order, int n, std::uint64_t seed, const std::string& variant_name, const ForwardResult& r) {
    std::ostringstream name;
    name << spec.label << "history_" << spec.problem_id << "_" << variant_name << "_k" << order << "_n" << n
         << "_seed" << seed << ".csv";
    CsvFile csv(out / name.str(), "iter,loss,l2_interp,h1_interp,l2_nn,h1_nn", report.files);
    for (const HistoryRow& row : r.history)
      csv.row({std::to_string(row.iter), fmt(row.loss), fmt(row.l2_interp), fmt(row.h1_interp), fmt(row.l2_nn),
               fmt(row.h1_nn)});
  }
};

struct InverseRunner {
  const RunSpec& spec;
  const RegisteredProblem reg;
  std::filesystem::path out;
  RunReport& report;
  std::ostringstream& log;

  void run_all() {
    CsvFile summary(out / (spec.label + "summary.csv"),
                    "problem,mesh,seed,status,eps_l2_u,eps_h1_u,eps_l2_u_nn,eps_l2_field,flux_ok_fraction",
                    report.files);
    std::vector<double> eps_u, eps_field;
    for (std::uint64_t seed : spec.seeds) {
      try {
        const auto [config, mesh_n] = stage(seed);
        const InverseResult r = train_inverse(config);
        write_report(seed, r);
        double flux_ok = std::numeric_limits<double>::quiet_NaN();
        if (config.exact_eta && !r.field_final_values.empty()) {
          // Pointwise relative flux error at the boundary quadrature points.
          const auto& pts = r.field_points.back();
          const Vec& vals = r.field_final_values.back();
          int ok = 0;
          for (Eigen::Index i = 0; i < vals.size(); ++i) {
            const double truth = config.exact_eta(pts[static_cast<std::size_t>(i)][0], pts[static_cast<std::size_t>(i)][1]);
            if (std::abs(vals(i) - truth) <= 0.05 * std::abs(truth)) ++ok;
          }
          flux_ok = static_cast<double>(ok) / static_cast<double>(vals.size());
        }
        summary.row({spec.problem_id, std::to_string(mesh_n), std::to_string(seed), "ok", fmt(r.eps_l2_u),
                     fmt(r.eps_h1_u), fmt(r.eps_l2_u_nn), fmt(r.eps_l2_field), fmt(flux_ok)});
        if (std::isfinite(r.eps_l2_u)) eps_u.push_back(r.eps_l2_u);
        if (std::isfinite(r.eps_l2_field)) eps_field.push_back(r.eps_l2_field);
      } catch (const std::exception& e) {
        report.numeric_failure = true;
        log << "seed " << seed << " failed: " << e.what() << "\n";
        summary.row({spec.problem_id, "", std::to_string(seed), "failed", "", "", "", "", ""});
      }
    }
    if (!eps_u.empty()) {
      log << "eps_l2_u min/median/max: " << fmt(*std::min_element(eps_u.begin(), eps_u.end())) << "/"
          << fmt(median(eps_u)) << "/" << fmt(*std::max_element(eps_u.begin(), eps_u.end())) << "\n";
    }
    if (!eps_field.empty()) {
      log << "eps_l2_field min/median/max: " << fmt(*std::min_element(eps_field.begin(), eps_field.end())) << "/"
          << fmt(median(eps_field)) << "/" << fmt(*std::max_element(eps_field.begin(), eps_field.end())) << "\n";
    }
  }

  std::pair<InverseConfig, int> stage(std::uint64_t seed) const {
    if (reg.kind == ProblemClass::Conduction) {
      IhcpInstance inst = make_ihcp_instance(
          spec.annulus_counts, spec.observation_grid, make_arch(2, spec.hidden, spec.activation), seed,
          make_arch(2, spec.eta_hidden, spec.activation), seed + 1000003);
      inst.config.plan = spec.plan;
      inst.config.grad_tol = spec.grad_tol;
      inst.config.history_stride = spec.history_stride;
      return {inst.config, spec.annulus_counts[0]};
    }

    const int n = spec.meshes.front();
    const MeshPtr mesh = cartesian_mesh({0.0, 0.0}, {1.0, 1.0}, {n, n});
    InverseConfig config;
    config.problem = reg.problem;
    config.mesh = mesh;
    config.order = 1;
    config.state_arch = make_arch(2, spec.hidden, spec.activation);
    config.state_seed = seed;
    UnknownFieldSpec kappa;
    kappa.target = UnknownTarget::Kappa;
    kappa.arch = make_arch(2, spec.kappa_hidden, spec.activation, spec.kappa_rectifier);
    kappa.seed = seed + 1000003;
    config.unknowns.push_back(kappa);
    config.plan = spec.plan;
    config.grad_tol = spec.grad_tol;
    config.exact_u = reg.exact_u;
    config.exact_grad_u = reg.exact_grad_u;
    config.exact_kappa = reg.exact_kappa;
    config.history_stride = spec.history_stride;

    // Observation points: tagged DOF set of the trial space.
    const FESpacePtr probe = lagrangian_space(mesh, 1, reg.problem.dirichlet_tags);
    for (const Point& p : probe->dof_coords) {
      if (reg.observe_all_dofs) {
        config.observations.points.push_back(p);
      } else if (reg.observation_box) {
        const auto& box = *reg.observation_box;
        if (p[0] > box[0][0] && p[0] < box[1][0] && p[1] > box[0][1] && p[1] < box[1][1])
          config.observations.points.push_back(p);
      }
    }

    // Synthetic data from a direct solve with the true coefficients (on the
    // same mesh, or once-refined to avoid the shared-discretization shortcut).
    const MeshPtr data_mesh = spec.data_refine ? uniform_refine(mesh, 2) : mesh;
    const FESpacePtr data_trial = lagrangian_space(data_mesh, 1, reg.problem.dirichlet_tags);
    const FEFunction data_u = fem_solve(reg.problem, data_trial, data_trial);
    Vec values = measure(data_u, config.observations.points);
    if (spec.noise_sigma > 0.0) {
      values = add_noise(values, spec.noise_sigma, spec.noise_seed);
      config.observations.noise_sigma = spec.noise_sigma;
      config.observations.noise_seed = spec.noise_seed;
    }
    config.observations.values = values;
    return {config, n};
  }

  void write_report(std::uint64_t seed, const InverseResult& r) {
    std::ostringstream name;
    name << spec.label << "report_" << spec.problem_id << "_seed" << seed << ".csv";
    CsvFile csv(out / name.str(), "iter,step,alpha,loss,misfit,residual_l1,eps_l2_u,eps_h1_u,eps_l2_field",
                report.files);
    for (const InverseReportRow& row : r.report)
      csv.row({std::to_string(row.iter), std::to_string(row.step), fmt(row.alpha), fmt(row.loss), fmt(row.misfit),
               fmt(row.residual_l1), fmt(row.eps_l2_u), fmt(row.eps_h1_u), fmt(row.eps_l2_field)});
  }
};

} // namespace

RunReport run(const RunSpec& spec) {
  RunReport report;
  std::ostringstream log;
  set_thread_count(spec.threads);

  std::filesystem::path out(spec.out_dir);
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec && !std::filesystem::exists(out)) throw IoError("cannot create output directory: " + out.string());

  const RegisteredProblem reg = problem_registry(spec.problem_id);
  if (reg.kind == ProblemClass::Forward) {
    ForwardRunner{spec, reg, out, report, log}.run_all();
  } else {
    InverseRunner{spec, reg, out, report, log}.run_all();
  }
  report.summary_text = log.str();
  return report;
}

} // namespace feinn
