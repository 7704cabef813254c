#include "cgap2/cgap2.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <exception>
#include <new>
#include <optional>
#include <string>

#include "cgap2/experiment.hpp"

struct cgap2_run {
  cgap2::RunConfig config = cgap2::RunConfig::desk();
  cgap2_log_fn log_fn = nullptr;
  void* log_user = nullptr;
  std::optional<std::string> result;

  cgap2::LogFn logger() const {
    if (!log_fn) return {};
    return [fn = log_fn, user = log_user](const std::string& line) { fn(line.c_str(), user); };
  }
};

struct cgap2_model {
  explicit cgap2_model(const cgap2::ModelConfig& c, std::uint64_t seed) : model(c, seed) {}
  cgap2::Model32 model;
};

namespace {

thread_local std::string g_error;
thread_local std::string g_kind;

cgap2_status status_of(cgap2::ErrorKind k) {
  using cgap2::ErrorKind;
  switch (k) {
    case ErrorKind::Usage:
    case ErrorKind::Config: return CGAP2_ERR_USAGE;
    case ErrorKind::Data:
    case ErrorKind::Window:
    case ErrorKind::Checkpoint: return CGAP2_ERR_DATA;
    case ErrorKind::Phase: return CGAP2_ERR_PHASE;
    default: return CGAP2_ERR_INTERNAL;
  }
}

template <typename F>
cgap2_status guarded(F&& f) {
  g_error.clear();
  g_kind.clear();
  try {
    f();
    return CGAP2_OK;
  } catch (const cgap2::Error& e) {
    g_error = e.what();
    g_kind = cgap2::to_string(e.kind());
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    g_error = "out of memory";
    g_kind = "internal";
  } catch (const std::exception& e) {
    g_error = e.what();
    g_kind = "internal";
  } catch (...) {
    g_error = "unknown failure";
    g_kind = "internal";
  }
  return CGAP2_ERR_INTERNAL;
}

cgap2_status null_arg(const char* what) {
  g_error = std::string("null argument: ") + what;
  g_kind = "usage";
  return CGAP2_ERR_USAGE;
}

char* dup(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p) throw std::bad_alloc();
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

std::string str(const char* s) { return s ? s : ""; }

}  // namespace

extern "C" {

const char* cgap2_version(void) { return "1.0.0"; }
const char* cgap2_last_error(void) { return g_error.c_str(); }
const char* cgap2_last_error_kind(void) { return g_kind.c_str(); }
void cgap2_string_free(char* s) { std::free(s); }

cgap2_status cgap2_run_create(const char* config_json, cgap2_run** out) {
  if (!out) return null_arg("out");
  *out = nullptr;
  return guarded([&] {
    auto run = std::make_unique<cgap2_run>();
    if (config_json) run->config = cgap2::parse_run_config(config_json);
    *out = run.release();
  });
}

cgap2_status cgap2_run_load(const char* path, cgap2_run** out) {
  if (!out) return null_arg("out");
  if (!path) return null_arg("path");
  *out = nullptr;
  return guarded([&] {
    auto run = std::make_unique<cgap2_run>();
    run->config = cgap2::load_run_config(path);
    *out = run.release();
  });
}

void cgap2_run_free(cgap2_run* run) { delete run; }

cgap2_status cgap2_run_set(cgap2_run* run, const char* field, const char* value) {
  if (!run) return null_arg("run");
  if (!field || !value) return null_arg("field/value");
  return guarded([&] { cgap2::set_run_field(run->config, field, value); });
}

cgap2_status cgap2_run_config_json(const cgap2_run* run, char** out) {
  if (!run) return null_arg("run");
  if (!out) return null_arg("out");
  return guarded([&] { *out = dup(cgap2::run_config_json(run->config)); });
}

cgap2_status cgap2_run_set_log(cgap2_run* run, cgap2_log_fn fn, void* user) {
  if (!run) return null_arg("run");
  run->log_fn = fn;
  run->log_user = user;
  return CGAP2_OK;
}

const char* cgap2_run_result(const cgap2_run* run) {
  return run && run->result ? run->result->c_str() : nullptr;
}

cgap2_status cgap2_generate(cgap2_run* run, int overwrite) {
  if (!run) return null_arg("run");
  return guarded([&] { run->result = cgap2::run_generate(run->config, overwrite != 0, run->logger()); });
}

cgap2_status cgap2_train(cgap2_run* run, const char* phase, int overwrite) {
  if (!run) return null_arg("run");
  if (!phase) return null_arg("phase");
  return guarded([&] { run->result = cgap2::run_train(run->config, phase, overwrite != 0, run->logger()); });
}

cgap2_status cgap2_eval(cgap2_run* run, const char* checkpoint, int overwrite) {
  if (!run) return null_arg("run");
  return guarded(
      [&] { run->result = cgap2::run_eval(run->config, str(checkpoint), overwrite != 0, run->logger()); });
}

cgap2_status cgap2_ablate(cgap2_run* run, const char* axis, const char* values, int overwrite) {
  if (!run) return null_arg("run");
  if (!axis) return null_arg("axis");
  return guarded([&] {
    std::vector<std::size_t> v;
    if (values && *values) v = cgap2::parse_value_list(values);
    run->result = cgap2::run_ablate(run->config, axis, v, overwrite != 0, run->logger());
  });
}

cgap2_status cgap2_classify_stream(cgap2_run* run, const char* checkpoint, int overwrite) {
  if (!run) return null_arg("run");
  return guarded([&] {
    run->result = cgap2::run_classify_stream(run->config, str(checkpoint), overwrite != 0, run->logger());
  });
}

cgap2_status cgap2_model_create(const char* model_json, uint64_t seed, cgap2_model** out) {
  if (!out) return null_arg("out");
  *out = nullptr;
  return guarded([&] {
    cgap2::ModelConfig mc = cgap2::ModelConfig::desk();
    if (model_json) mc = cgap2::parse_run_config(std::string("{\"model\":") + model_json + "}").model;
    *out = new cgap2_model(mc, seed);
  });
}

cgap2_status cgap2_run_create_model(const cgap2_run* run, cgap2_model** out) {
  if (!run) return null_arg("run");
  if (!out) return null_arg("out");
  *out = nullptr;
  return guarded([&] { *out = new cgap2_model(run->config.model, run->config.seed); });
}

void cgap2_model_free(cgap2_model* model) { delete model; }

cgap2_status cgap2_model_load(cgap2_model* model, const char* checkpoint) {
  if (!model) return null_arg("model");
  if (!checkpoint) return null_arg("checkpoint");
  return guarded([&] { cgap2::load_checkpoint(model->model, checkpoint); });
}

cgap2_status cgap2_model_save(const cgap2_model* model, const char* checkpoint) {
  if (!model) return null_arg("model");
  if (!checkpoint) return null_arg("checkpoint");
  return guarded([&] { cgap2::save_checkpoint(model->model, checkpoint); });
}

cgap2_status cgap2_model_count_parameters(const cgap2_model* model, const char* stage, uint64_t* out) {
  if (!model) return null_arg("model");
  if (!stage || !out) return null_arg("stage/out");
  return guarded([&] {
    *out = model->model.count_parameters(cgap2::parse_stage(stage));
  });
}

cgap2_status cgap2_model_completed_phase(const cgap2_model* model, int* out) {
  if (!model) return null_arg("model");
  if (!out) return null_arg("out");
  *out = model->model.completed_phase;
  return CGAP2_OK;
}

}  // extern "C"
