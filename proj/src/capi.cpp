#include "feinn.h"

#include "feinn/config.hpp"
#include "feinn/runner.hpp"

#include <string>

namespace {

thread_local std::string g_last_error;

feinn_status fail(feinn_status code, const std::string& message) {
  g_last_error = message;
  return code;
}

template <typename Fn>
feinn_status guard(Fn&& fn) {
  try {
    return fn();
  } catch (const feinn::ValidationError& e) {
    return fail(FEINN_ERR_INVALID_ARGUMENT, e.what());
  } catch (const feinn::ParseError& e) {
    return fail(FEINN_ERR_PARSE, e.what());
  } catch (const feinn::NumericError& e) {
    return fail(FEINN_ERR_NUMERIC, e.what());
  } catch (const feinn::IoError& e) {
    return fail(FEINN_ERR_IO, e.what());
  } catch (const std::invalid_argument& e) {
    return fail(FEINN_ERR_INVALID_ARGUMENT, e.what());
  } catch (const std::exception& e) {
    return fail(FEINN_ERR_INTERNAL, e.what());
  }
}

} // namespace

struct feinn_config {
  feinn::ConfigText text;
};

struct feinn_report {
  feinn::RunReport report;
};

extern "C" {

const char* feinn_version(void) { return "1.0.0"; }

const char* feinn_last_error(void) { return g_last_error.c_str(); }

feinn_status feinn_config_load(const char* path, feinn_config** out) {
  if (!path || !out) return fail(FEINN_ERR_INVALID_ARGUMENT, "null argument");
  *out = nullptr;
  return guard([&] {
    auto cfg = new feinn_config{feinn::ConfigText::load(path)};
    *out = cfg;
    return FEINN_OK;
  });
}

feinn_status feinn_config_parse(const char* text, feinn_config** out) {
  if (!text || !out) return fail(FEINN_ERR_INVALID_ARGUMENT, "null argument");
  *out = nullptr;
  return guard([&] {
    auto cfg = new feinn_config{feinn::ConfigText::parse_string(text)};
    *out = cfg;
    return FEINN_OK;
  });
}

feinn_status feinn_config_set(feinn_config* config, const char* section, const char* key, const char* value) {
  if (!config || !section || !key || !value) return fail(FEINN_ERR_INVALID_ARGUMENT, "null argument");
  return guard([&] {
    config->text.set(section, key, value);
    return FEINN_OK;
  });
}

feinn_status feinn_config_validate(const feinn_config* config) {
  if (!config) return fail(FEINN_ERR_INVALID_ARGUMENT, "null argument");
  return guard([&] {
    feinn::validate_config(config->text);
    return FEINN_OK;
  });
}

feinn_status feinn_run(const feinn_config* config, feinn_report** out) {
  if (!config || !out) return fail(FEINN_ERR_INVALID_ARGUMENT, "null argument");
  *out = nullptr;
  return guard([&] {
    const feinn::RunSpec spec = feinn::validate_config(config->text);
    auto report = new feinn_report{feinn::run(spec)};
    *out = report;
    return FEINN_OK;
  });
}

size_t feinn_report_file_count(const feinn_report* report) { return report ? report->report.files.size() : 0; }

const char* feinn_report_file_path(const feinn_report* report, size_t index) {
  if (!report || index >= report->report.files.size()) return nullptr;
  return report->report.files[index].c_str();
}

const char* feinn_report_summary(const feinn_report* report) {
  return report ? report->report.summary_text.c_str() : "";
}

int feinn_report_partial_failure(const feinn_report* report) {
  return report && report->report.numeric_failure ? 1 : 0;
}

void feinn_config_free(feinn_config* config) { delete config; }

void feinn_report_free(feinn_report* report) { delete report; }

} // extern "C"
