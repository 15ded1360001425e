#pragma once

#include "feinn/config.hpp"

#include <string>
#include <vector>

namespace feinn {

struct RunReport {
  std::vector<std::string> files;
  std::string summary_text;
  bool numeric_failure = false; // some seed failed; others still ran
};

/// Executes the configured experiment (sweeps x seeds), writing per-run CSVs
/// plus summary/rate files into the output directory.
RunReport run(const RunSpec& spec);

/// Least-squares slope of log(error) against log(spacing).
double fit_rate(const std::vector<double>& errors, const std::vector<double>& spacings);

} // namespace feinn
