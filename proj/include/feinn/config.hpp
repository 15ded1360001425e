#pragma once

#include "feinn/forward.hpp"
#include "feinn/inverse.hpp"

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace feinn {

/// Validation failure listing every offending section/key.
class ValidationError : public std::runtime_error {
public:
  explicit ValidationError(std::vector<std::string> issues);
  const std::vector<std::string>& issues() const { return issues_; }

private:
  std::vector<std::string> issues_;
};

/// Flat sectioned key-value config text: `[section]` headers, `key = value`
/// lines, `#` comments. Unknown sections/keys are rejected at validation.
class ConfigText {
public:
  static ConfigText parse(std::istream& in);
  static ConfigText parse_string(const std::string& text);
  static ConfigText load(const std::string& path);

  void set(const std::string& section, const std::string& key, const std::string& value);
  bool has(const std::string& section, const std::string& key) const;
  std::string get(const std::string& section, const std::string& key, const std::string& fallback = "") const;

  const std::map<std::string, std::map<std::string, std::string>>& sections() const { return sections_; }

private:
  std::map<std::string, std::map<std::string, std::string>> sections_;
};

/// Fully validated, typed run description.
struct RunSpec {
  std::string problem_id;
  SolverVariant variant = SolverVariant::Feinn;
  std::string out_dir = ".";
  std::string label;
  int threads = 1;

  std::vector<int> meshes{16}; // n x n unit-square levels (sweep axis)
  std::string mesh_file;
  std::array<int, 2> annulus_counts{50, 50};

  std::vector<int> orders{1};
  bool petrov_galerkin = true;
  OffsetMode offset_mode = OffsetMode::ZeroExtension;

  NormSpec norm;

  std::vector<int> hidden{50, 50, 50, 50};
  Activation activation = Activation::Tanh;
  std::vector<std::uint64_t> seeds{1};
  std::vector<int> kappa_hidden{20};
  Rectifier kappa_rectifier = Rectifier::AbsPlusEps;
  std::vector<int> eta_hidden{20, 20};

  int max_iters = 1000;
  double grad_tol = 1e-12;
  int history_stride = 1;
  bool log_nn_errors = true;

  TrainingPlan plan;
  double noise_sigma = 0.0;
  std::uint64_t noise_seed = 1;
  std::array<Point, 2> observation_box{{{0.25, 0.25}, {0.75, 0.75}}};
  int observation_grid = 10;
  bool data_refine = false;
};

/// Builds a RunSpec, throwing ValidationError with every offending key
/// (unknown keys, bad values, incompatible problem/variant combinations).
RunSpec validate_config(const ConfigText& text);

} // namespace feinn
