// Experiment runner over the shared C API.
//
//   feinn run <config-file> [--out DIR] [--seeds a,b,c] [--threads N]
//
// Exit codes: 0 success, 2 validation/parse error, 3 numeric failure.

#include <feinn.h>

#include <CLI11.hpp>

#include <cstdio>
#include <memory>
#include <string>

namespace {

int status_to_exit(feinn_status s) {
  switch (s) {
    case FEINN_OK: return 0;
    case FEINN_ERR_NUMERIC: return 3;
    case FEINN_ERR_INVALID_ARGUMENT:
    case FEINN_ERR_PARSE:
    case FEINN_ERR_IO: return 2;
    default: return 1;
  }
}

std::string commas_to_spaces(std::string s) {
  for (char& c : s)
    if (c == ',') c = ' ';
  return s;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weak-residual network/FEM experiment runner"};
  app.require_subcommand(1);

  auto* run_cmd = app.add_subcommand("run", "execute a config-driven experiment");
  std::string config_path, out_dir, seeds;
  int threads = 0;
  run_cmd->add_option("config", config_path, "experiment config file")->required();
  run_cmd->add_option("--out", out_dir, "output directory (overrides config and FEINN_OUT_DIR)");
  run_cmd->add_option("--seeds", seeds, "comma-separated seed list override");
  run_cmd->add_option("--threads", threads, "worker threads for assembly/evaluation");

  CLI11_PARSE(app, argc, argv);

  feinn_config* config = nullptr;
  feinn_status st = feinn_config_load(config_path.c_str(), &config);
  if (st != FEINN_OK) {
    std::fprintf(stderr, "error: %s\n", feinn_last_error());
    return status_to_exit(st);
  }
  auto config_guard = std::unique_ptr<feinn_config, decltype(&feinn_config_free)>(config, feinn_config_free);

  if (!out_dir.empty()) feinn_config_set(config, "experiment", "out_dir", out_dir.c_str());
  if (!seeds.empty()) feinn_config_set(config, "network", "seeds", commas_to_spaces(seeds).c_str());
  if (threads > 0) feinn_config_set(config, "experiment", "threads", std::to_string(threads).c_str());

  st = feinn_config_validate(config);
  if (st != FEINN_OK) {
    std::fprintf(stderr, "error: %s\n", feinn_last_error());
    return status_to_exit(st);
  }

  feinn_report* report = nullptr;
  st = feinn_run(config, &report);
  if (st != FEINN_OK) {
    std::fprintf(stderr, "error: %s\n", feinn_last_error());
    return status_to_exit(st);
  }
  auto report_guard = std::unique_ptr<feinn_report, decltype(&feinn_report_free)>(report, feinn_report_free);

  const char* summary = feinn_report_summary(report);
  if (summary && *summary) std::fputs(summary, stdout);
  for (size_t i = 0; i < feinn_report_file_count(report); ++i)
    std::printf("wrote %s\n", feinn_report_file_path(report, i));

  if (feinn_report_partial_failure(report)) {
    std::fprintf(stderr, "error: some seeds failed numerically\n");
    return 3;
  }
  return 0;
}
