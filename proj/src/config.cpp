#include "feinn/config.hpp"

#include "feinn/registry.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace feinn {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

} // namespace

ValidationError::ValidationError(std::vector<std::string> issues)
    : std::runtime_error("invalid configuration:\n  - " + [&issues] {
        std::string joined;
        for (std::size_t i = 0; i < issues.size(); ++i) joined += (i ? "\n  - " : "") + issues[i];
        return joined;
      }()),
      issues_(std::move(issues)) {}

ConfigText ConfigText::parse(std::istream& in) {
  ConfigText cfg;
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError("unterminated section header", lineno);
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw ParseError("empty section name", lineno);
      cfg.sections_[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value'", lineno);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError("empty key", lineno);
    if (section.empty()) throw ParseError("key outside any section", lineno);
    cfg.sections_[section][key] = value;
  }
  return cfg;
}

ConfigText ConfigText::parse_string(const std::string& text) {
  std::istringstream in(text);
  return parse(in);
}

ConfigText ConfigText::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  return parse(in);
}

void ConfigText::set(const std::string& section, const std::string& key, const std::string& value) {
  sections_[section][key] = value;
}

bool ConfigText::has(const std::string& section, const std::string& key) const {
  const auto s = sections_.find(section);
  return s != sections_.end() && s->second.count(key) > 0;
}

std::string ConfigText::get(const std::string& section, const std::string& key, const std::string& fallback) const {
  const auto s = sections_.find(section);
  if (s == sections_.end()) return fallback;
  const auto k = s->second.find(key);
  return k == s->second.end() ? fallback : k->second;
}

namespace {

const std::map<std::string, std::vector<std::string>>& schema() {
  static const std::map<std::string, std::vector<std::string>> s{
      {"experiment", {"problem", "variant", "out_dir", "label", "threads"}},
      {"mesh", {"meshes", "file", "annulus_counts"}},
      {"fespace", {"orders", "petrov_galerkin", "offset"}},
      {"norm", {"vector_norm", "preconditioner", "gmg_cycles", "outer_norm"}},
      {"network",
       {"hidden", "activation", "seeds", "kappa_hidden", "kappa_rectifier", "eta_hidden"}},
      {"training", {"max_iters", "grad_tol", "history_stride", "log_nn_errors"}},
      {"inverse",
       {"plan", "alphas", "noise_sigma", "noise_seed", "observation_box", "observations", "data_refine"}},
  };
  return s;
}

class Checker {
public:
  explicit Checker(const ConfigText& cfg) : cfg_(cfg) {}

  std::vector<std::string> issues;

  template <typename T>
  T parse_scalar(const std::string& raw, const std::string& where, bool& ok);

  double num(const std::string& sec, const std::string& key, double fallback) {
    if (!cfg_.has(sec, key)) return fallback;
    bool ok = true;
    const double v = parse_scalar<double>(cfg_.get(sec, key), sec + "." + key, ok);
    return ok ? v : fallback;
  }

  long integer(const std::string& sec, const std::string& key, long fallback) {
    if (!cfg_.has(sec, key)) return fallback;
    bool ok = true;
    const long v = parse_scalar<long>(cfg_.get(sec, key), sec + "." + key, ok);
    return ok ? v : fallback;
  }

  bool flag(const std::string& sec, const std::string& key, bool fallback) {
    if (!cfg_.has(sec, key)) return fallback;
    const std::string v = cfg_.get(sec, key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    issues.push_back(sec + "." + key + ": expected a boolean, got '" + v + "'");
    return fallback;
  }

  template <typename T>
  std::vector<T> list(const std::string& sec, const std::string& key, std::vector<T> fallback) {
    if (!cfg_.has(sec, key)) return fallback;
    std::istringstream in(cfg_.get(sec, key));
    std::vector<T> out;
    std::string tok;
    bool ok = true;
    while (in >> tok) out.push_back(parse_scalar<T>(tok, sec + "." + key, ok));
    if (!ok) return fallback;
    if (out.empty()) {
      issues.push_back(sec + "." + key + ": empty list");
      return fallback;
    }
    return out;
  }

  std::string word(const std::string& sec, const std::string& key, const std::string& fallback,
                   const std::vector<std::string>& allowed) {
    const std::string v = cfg_.get(sec, key, fallback);
    if (!allowed.empty() && std::find(allowed.begin(), allowed.end(), v) == allowed.end()) {
      std::string opts;
      for (const auto& a : allowed) opts += (opts.empty() ? "" : "|") + a;
      issues.push_back(sec + "." + key + ": '" + v + "' is not one of " + opts);
      return fallback;
    }
    return v;
  }

private:
  const ConfigText& cfg_;
};

template <typename T>
T Checker::parse_scalar(const std::string& raw, const std::string& where, bool& ok) {
  std::istringstream in(raw);
  T v{};
  if (!(in >> v) || !(in >> std::ws).eof()) {
    issues.push_back(where + ": cannot parse '" + raw + "'");
    ok = false;
  }
  return v;
}

} // namespace

RunSpec validate_config(const ConfigText& cfg) {
  Checker c(cfg);

  // Unknown sections/keys first, so every offender is reported.
  for (const auto& [section, keys] : cfg.sections()) {
    const auto it = schema().find(section);
    if (it == schema().end()) {
      c.issues.push_back("unknown section [" + section + "]");
      continue;
    }
    for (const auto& [key, value] : keys) {
      (void)value;
      if (std::find(it->second.begin(), it->second.end(), key) == it->second.end())
        c.issues.push_back("unknown key " + section + "." + key);
    }
  }

  RunSpec spec;
  const auto ids = registry_ids();
  spec.problem_id = c.word("experiment", "problem", "", ids);
  if (spec.problem_id.empty()) c.issues.push_back("experiment.problem is required");

  const std::string variant = c.word("experiment", "variant", "feinn", {"fem_only", "feinn", "ivpinn"});
  spec.variant = variant == "fem_only" ? SolverVariant::FemOnly
                                       : (variant == "ivpinn" ? SolverVariant::Ivpinn : SolverVariant::Feinn);

  spec.out_dir = cfg.get("experiment", "out_dir", "");
  if (spec.out_dir.empty()) {
    const char* env = std::getenv("FEINN_OUT_DIR");
    spec.out_dir = env && *env ? env : ".";
  }
  spec.label = cfg.get("experiment", "label", "");
  spec.threads = static_cast<int>(c.integer("experiment", "threads", 1));
  if (spec.threads < 1) c.issues.push_back("experiment.threads must be >= 1");

  spec.meshes = c.list<int>("mesh", "meshes", {16});
  for (int n : spec.meshes)
    if (n < 1) c.issues.push_back("mesh.meshes entries must be >= 1");
  spec.mesh_file = cfg.get("mesh", "file", "");
  {
    const auto ac = c.list<int>("mesh", "annulus_counts", {50, 50});
    if (ac.size() != 2)
      c.issues.push_back("mesh.annulus_counts needs exactly two entries");
    else
      spec.annulus_counts = {ac[0], ac[1]};
  }

  spec.orders = c.list<int>("fespace", "orders", {1});
  for (int k : spec.orders)
    if (k < 1 || k > 8) c.issues.push_back("fespace.orders entries must be in 1..8");
  spec.petrov_galerkin = c.flag("fespace", "petrov_galerkin", true);
  const std::string offset = c.word("fespace", "offset", "standard", {"standard", "smooth"});
  spec.offset_mode = offset == "smooth" ? OffsetMode::HarmonicExtension : OffsetMode::ZeroExtension;

  const std::string vn = c.word("norm", "vector_norm", "ell2", {"ell1", "ell2"});
  spec.norm.vector_norm = vn == "ell1" ? VectorNorm::L1 : VectorNorm::L2;
  const std::string pk =
      c.word("norm", "preconditioner", "none", {"none", "mass", "exact_linear", "exact_trial", "gmg"});
  spec.norm.preconditioner = pk == "mass"           ? PreconditionerKind::Mass
                             : pk == "exact_linear" ? PreconditionerKind::ExactLinear
                             : pk == "exact_trial"  ? PreconditionerKind::ExactTrial
                             : pk == "gmg"          ? PreconditionerKind::Gmg
                                                    : PreconditionerKind::None;
  spec.norm.gmg_cycles = static_cast<int>(c.integer("norm", "gmg_cycles", 3));
  const std::string on = c.word("norm", "outer_norm", "euclidean", {"euclidean", "h1"});
  spec.norm.outer_norm = on == "h1" ? OuterNorm::H1 : OuterNorm::Euclidean;
  if (spec.norm.outer_norm == OuterNorm::H1 && spec.norm.preconditioner == PreconditionerKind::None)
    c.issues.push_back("norm.outer_norm = h1 requires a preconditioner");

  spec.hidden = c.list<int>("network", "hidden", {50, 50, 50, 50});
  const std::string act = c.word("network", "activation", "tanh", {"tanh", "softplus", "relu"});
  spec.activation = act == "tanh" ? Activation::Tanh : (act == "softplus" ? Activation::Softplus : Activation::Relu);
  spec.seeds = c.list<std::uint64_t>("network", "seeds", {1});
  spec.kappa_hidden = c.list<int>("network", "kappa_hidden", {20});
  const std::string rect = c.word("network", "kappa_rectifier", "abs", {"abs", "square"});
  spec.kappa_rectifier = rect == "square" ? Rectifier::SquarePlusEps : Rectifier::AbsPlusEps;
  spec.eta_hidden = c.list<int>("network", "eta_hidden", {20, 20});

  spec.max_iters = static_cast<int>(c.integer("training", "max_iters", 1000));
  if (spec.max_iters < 0) c.issues.push_back("training.max_iters must be >= 0");
  spec.grad_tol = c.num("training", "grad_tol", 1e-12);
  spec.history_stride = static_cast<int>(c.integer("training", "history_stride", 1));
  if (spec.history_stride < 1) c.issues.push_back("training.history_stride must be >= 1");
  spec.log_nn_errors = c.flag("training", "log_nn_errors", true);

  // Inverse plan: "n1 n2 kxn3".
  if (cfg.has("inverse", "plan")) {
    std::istringstream in(cfg.get("inverse", "plan"));
    std::string t1, t2, t3;
    if (!(in >> t1 >> t2 >> t3) || !(in >> std::ws).eof()) {
      c.issues.push_back("inverse.plan: expected 'n1 n2 kxn3'");
    } else {
      try {
        spec.plan.n1 = std::stoi(t1);
        spec.plan.n2 = std::stoi(t2);
        const auto x = t3.find('x');
        if (x == std::string::npos) {
          spec.plan.n3 = std::stoi(t3);
          spec.plan.alphas.assign(1, 1.0);
        } else {
          const int k = std::stoi(t3.substr(0, x));
          spec.plan.n3 = std::stoi(t3.substr(x + 1));
          spec.plan.alphas.assign(static_cast<std::size_t>(std::max(0, k)), 0.0);
        }
      } catch (const std::exception&) {
        c.issues.push_back("inverse.plan: cannot parse '" + cfg.get("inverse", "plan") + "'");
      }
    }
  }
  if (cfg.has("inverse", "alphas")) {
    const auto a = c.list<double>("inverse", "alphas", {});
    if (!spec.plan.alphas.empty() && a.size() != spec.plan.alphas.size())
      c.issues.push_back("inverse.alphas: length must match the plan's sub-step count");
    spec.plan.alphas = a;
    for (std::size_t i = 1; i < a.size(); ++i)
      if (!(a[i] > a[i - 1])) c.issues.push_back("inverse.alphas must be strictly increasing");
  }
  spec.noise_sigma = c.num("inverse", "noise_sigma", 0.0);
  if (spec.noise_sigma < 0.0) c.issues.push_back("inverse.noise_sigma must be >= 0");
  spec.noise_seed = static_cast<std::uint64_t>(c.integer("inverse", "noise_seed", 1));
  {
    const auto box = c.list<double>("inverse", "observation_box", {0.25, 0.25, 0.75, 0.75});
    if (box.size() != 4)
      c.issues.push_back("inverse.observation_box needs four entries (x0 y0 x1 y1)");
    else
      spec.observation_box = {{{box[0], box[1]}, {box[2], box[3]}}};
  }
  spec.observation_grid = static_cast<int>(c.integer("inverse", "observations", 10));
  spec.data_refine = c.flag("inverse", "data_refine", false);

  // Problem/variant compatibility.
  if (!spec.problem_id.empty()) {
    const RegisteredProblem reg = problem_registry(spec.problem_id);
    const bool forward = reg.kind == ProblemClass::Forward;
    if (!forward && spec.variant != SolverVariant::Feinn && cfg.has("experiment", "variant"))
      c.issues.push_back("experiment.variant: inverse problems run the coupled solver only");
    if (spec.variant == SolverVariant::Ivpinn) {
      if (!reg.distance) c.issues.push_back("experiment.variant: no distance function is defined for this problem");
      if (!spec.mesh_file.empty())
        c.issues.push_back("experiment.variant: the product-form variant is not available on imported meshes");
    }
    if (reg.geometry == GeometryKind::Imported && spec.mesh_file.empty())
      c.issues.push_back("mesh.file is required for " + spec.problem_id);
  }

  if (!c.issues.empty()) throw ValidationError(std::move(c.issues));
  return spec;
}

} // namespace feinn
