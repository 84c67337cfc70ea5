#include "mlca/c_api.h"

#include <string>

#include "error.hpp"
#include "runner.hpp"

struct mlca_run {
  mlca::RunConfig cfg;
};

namespace {

thread_local std::string g_error;
thread_local std::string g_output;

int code_for(const std::exception& e) {
  if (dynamic_cast<const mlca::DivergedError*>(&e)) return MLCA_ERR_DIVERGED;
  if (dynamic_cast<const mlca::ConfigError*>(&e) || dynamic_cast<const mlca::PathError*>(&e) ||
      dynamic_cast<const mlca::DimensionError*>(&e) ||
      dynamic_cast<const mlca::InfeasibleAlignmentError*>(&e))
    return MLCA_ERR_USAGE;
  return MLCA_ERR_VERIFY;
}

template <typename Fn>
int guarded(Fn&& fn) {
  g_error.clear();
  g_output.clear();
  try {
    return fn();
  } catch (const std::exception& e) {
    g_error = e.what();
    return code_for(e);
  } catch (...) {
    g_error = "unknown error";
    return MLCA_ERR_VERIFY;
  }
}

std::string opt_str(const char* s) { return s ? std::string(s) : std::string(); }

int require(const void* p, const char* what) {
  if (p) return MLCA_OK;
  g_error = std::string("null ") + what;
  return MLCA_ERR_USAGE;
}

}  // namespace

extern "C" {

int mlca_run_create(const char* preset, const char* config_path, mlca_run** out) {
  if (int rc = require(out, "output handle")) return rc;
  *out = nullptr;
  return guarded([&] {
    mlca::RunConfig cfg = mlca::preset_config(opt_str(preset).empty() ? "desk" : preset);
    if (config_path && *config_path) cfg = mlca::parse_config_file(config_path, cfg);
    *out = new mlca_run{std::move(cfg)};
    return MLCA_OK;
  });
}

int mlca_run_set(mlca_run* run, const char* override_spec) {
  if (int rc = require(run, "run handle")) return rc;
  if (int rc = require(override_spec, "override")) return rc;
  return guarded([&] {
    mlca::apply_override(run->cfg, override_spec);
    return MLCA_OK;
  });
}

void mlca_run_destroy(mlca_run* run) { delete run; }

int mlca_run_synth_data(mlca_run* run, const char* data_dir) {
  if (int rc = require(run, "run handle")) return rc;
  if (int rc = require(data_dir, "data_dir")) return rc;
  return guarded([&] {
    mlca::cmd_synth_data(run->cfg, data_dir, &g_output);
    return MLCA_OK;
  });
}

int mlca_run_train(mlca_run* run, const char* data_dir, const char* out_dir, const char* resume,
                   const char* init_asr, const char* init_vsr, int copy_decoder,
                   int allow_large) {
  if (int rc = require(run, "run handle")) return rc;
  if (int rc = require(data_dir, "data_dir")) return rc;
  if (int rc = require(out_dir, "out_dir")) return rc;
  return guarded([&] {
    mlca::TrainRunOptions opt;
    opt.resume_from = opt_str(resume);
    opt.init_asr = opt_str(init_asr);
    opt.init_vsr = opt_str(init_vsr);
    opt.copy_decoder = copy_decoder != 0;
    opt.allow_large = allow_large != 0;
    mlca::cmd_train(run->cfg, data_dir, out_dir, opt, &g_output);
    return MLCA_OK;
  });
}

int mlca_run_eval(mlca_run* run, const char* ckpt, const char* data_dir, const char* split,
                  int beam, int batch_size, const char* out_dir) {
  if (int rc = require(run, "run handle")) return rc;
  if (int rc = require(ckpt, "ckpt")) return rc;
  if (int rc = require(data_dir, "data_dir")) return rc;
  if (int rc = require(out_dir, "out_dir")) return rc;
  return guarded([&] {
    mlca::cmd_eval(ckpt, data_dir, split ? split : "eval", beam, batch_size, out_dir, &g_output);
    return MLCA_OK;
  });
}

int mlca_run_decode(mlca_run* run, const char* ckpt, const char* data_dir, const char* split,
                    int beam, int batch_size, const char* out_dir) {
  if (int rc = require(run, "run handle")) return rc;
  if (int rc = require(ckpt, "ckpt")) return rc;
  if (int rc = require(data_dir, "data_dir")) return rc;
  if (int rc = require(out_dir, "out_dir")) return rc;
  return guarded([&] {
    mlca::cmd_decode(ckpt, data_dir, split ? split : "eval", beam, batch_size, out_dir,
                     &g_output);
    return MLCA_OK;
  });
}

int mlca_run_ablate(mlca_run* run, const char* data_dir, const char* out_dir,
                    const uint64_t* seeds, int n_seeds, int jobs) {
  if (int rc = require(run, "run handle")) return rc;
  if (int rc = require(data_dir, "data_dir")) return rc;
  if (int rc = require(out_dir, "out_dir")) return rc;
  if (n_seeds > 0 && !seeds) return require(seeds, "seeds");
  return guarded([&] {
    std::vector<std::uint64_t> ss(seeds, seeds + (n_seeds > 0 ? n_seeds : 0));
    mlca::cmd_ablate(run->cfg, data_dir, out_dir, ss, jobs, &g_output);
    return MLCA_OK;
  });
}

int mlca_gradcheck(int n_cfg, uint64_t seed) {
  return guarded([&] {
    if (n_cfg < 1) throw mlca::ConfigError("gradcheck: n_cfg must be >= 1");
    if (mlca::cmd_gradcheck(n_cfg, seed, &g_output)) return MLCA_OK;
    g_error = "gradient check failed";
    return MLCA_ERR_VERIFY;
  });
}

int mlca_ctc_oracle(int n_cases, uint64_t seed) {
  return guarded([&] {
    if (n_cases < 1) throw mlca::ConfigError("ctc-oracle: n_cases must be >= 1");
    if (mlca::cmd_ctc_oracle(n_cases, seed, &g_output)) return MLCA_OK;
    g_error = "ctc oracle comparison failed";
    return MLCA_ERR_VERIFY;
  });
}

const char* mlca_last_error(void) { return g_error.c_str(); }
const char* mlca_last_output(void) { return g_output.c_str(); }

}  // extern "C"
