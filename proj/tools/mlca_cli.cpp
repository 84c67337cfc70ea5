// Command-line front end; talks to the library only through the C API.

#include <cinttypes>
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mlca/c_api.h"

namespace {

struct RunHandle {
  mlca_run* run = nullptr;
  ~RunHandle() { mlca_run_destroy(run); }
};

int fail(int rc) {
  std::fprintf(stderr, "error: %s\n", mlca_last_error());
  return rc;
}

void print_output() {
  const char* out = mlca_last_output();
  if (out && *out) std::printf("%s\n", out);
}

int make_run(const std::string& preset, const std::string& config,
             const std::vector<std::string>& sets, RunHandle& h) {
  int rc = mlca_run_create(preset.empty() ? nullptr : preset.c_str(),
                           config.empty() ? nullptr : config.c_str(), &h.run);
  if (rc != MLCA_OK) return rc;
  for (const std::string& s : sets) {
    rc = mlca_run_set(h.run, s.c_str());
    if (rc != MLCA_OK) return rc;
  }
  return MLCA_OK;
}

const char* opt_cstr(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"audio-visual speech recognizer (synthetic-corpus scale)"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string preset = "desk", config;
  std::vector<std::string> sets;
  app.add_option("--preset", preset, "configuration preset: desk or paper-shape");
  app.add_option("--config", config, "INI-style config file layered on the preset");
  app.add_option("--set", sets, "override, e.g. model.fusion=add");

  std::string default_data = "data";
  if (const char* env = std::getenv("MLCA_DATA_DIR")) default_data = env;

  auto* synth = app.add_subcommand("synth-data", "generate the synthetic corpus");
  std::string sd_out = default_data;
  synth->add_option("--out", sd_out, "corpus directory");
  std::uint64_t sd_seed = 0;
  bool sd_has_seed = false;
  synth->add_option("--seed", sd_seed, "corpus seed")->each([&](const std::string&) {
    sd_has_seed = true;
  });

  auto* train = app.add_subcommand("train", "train a model");
  std::string tr_data = default_data, tr_out = "run", tr_resume, tr_asr, tr_vsr;
  std::int64_t tr_steps = -1;
  std::uint64_t tr_seed = 0;
  bool tr_has_seed = false, tr_copy_dec = false, tr_allow_large = false;
  train->add_option("--data", tr_data, "corpus directory");
  train->add_option("--out", tr_out, "output directory (ckpt.bin, metrics.jsonl, eval.json)");
  train->add_option("--steps", tr_steps, "override training steps");
  train->add_option("--seed", tr_seed, "model seed")->each([&](const std::string&) {
    tr_has_seed = true;
  });
  train->add_option("--resume", tr_resume, "checkpoint to continue from");
  train->add_option("--init-asr", tr_asr, "audio-only checkpoint for pretrained init");
  train->add_option("--init-vsr", tr_vsr, "video-only checkpoint for pretrained init");
  train->add_flag("--copy-decoder", tr_copy_dec, "also copy the decoder on pretrained init");
  train->add_flag("--allow-large", tr_allow_large, "permit full-size model geometries");

  auto* eval = app.add_subcommand("eval", "score a checkpoint on a split");
  std::string ev_ckpt, ev_data = default_data, ev_split = "eval", ev_out = "run";
  int ev_beam = 5, ev_batch = 16;
  eval->add_option("--ckpt", ev_ckpt, "checkpoint path")->required();
  eval->add_option("--data", ev_data, "corpus directory");
  eval->add_option("--split", ev_split, "train, dev, or eval");
  eval->add_option("--beam", ev_beam, "attention beam width");
  eval->add_option("--batch", ev_batch, "evaluation batch size");
  eval->add_option("--out", ev_out, "output directory (eval.json)");

  auto* decode = app.add_subcommand("decode", "eval plus per-utterance hypotheses");
  std::string dc_ckpt, dc_data = default_data, dc_split = "eval", dc_out = "run";
  int dc_beam = 5, dc_batch = 16;
  decode->add_option("--ckpt", dc_ckpt, "checkpoint path")->required();
  decode->add_option("--data", dc_data, "corpus directory");
  decode->add_option("--split", dc_split, "train, dev, or eval");
  decode->add_option("--beam", dc_beam, "attention beam width");
  decode->add_option("--batch", dc_batch, "evaluation batch size");
  decode->add_option("--out", dc_out, "output directory (eval.json, hyps.jsonl)");

  auto* ablate = app.add_subcommand("ablate", "train and score the fusion grid");
  std::string ab_data = default_data, ab_out = "ablate";
  std::vector<std::uint64_t> ab_seeds = {1, 2, 3};
  int ab_jobs = 1;
  std::int64_t ab_steps = -1;
  ablate->add_option("--data", ab_data, "corpus directory");
  ablate->add_option("--out", ab_out, "output directory (ablate.jsonl, ablate.txt)");
  ablate->add_option("--seeds", ab_seeds, "model seeds, one grid pass each")->take_all();
  ablate->add_option("--jobs", ab_jobs, "parallel training runs");
  ablate->add_option("--steps", ab_steps, "override training steps");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");
  int gc_n = 50;
  std::uint64_t gc_seed = 7;
  gradcheck->add_option("--configs", gc_n, "random configurations per case");
  gradcheck->add_option("--seed", gc_seed, "suite seed");

  auto* oracle = app.add_subcommand("ctc-oracle", "CTC loss vs brute-force enumeration");
  int or_n = 200;
  std::uint64_t or_seed = 7;
  oracle->add_option("--cases", or_n, "random instances");
  oracle->add_option("--seed", or_seed, "suite seed");

  CLI11_PARSE(app, argc, argv);

  if (gradcheck->parsed()) {
    const int rc = mlca_gradcheck(gc_n, gc_seed);
    print_output();
    return rc == MLCA_OK ? 0 : fail(rc);
  }
  if (oracle->parsed()) {
    const int rc = mlca_ctc_oracle(or_n, or_seed);
    print_output();
    return rc == MLCA_OK ? 0 : fail(rc);
  }

  RunHandle h;
  if (synth->parsed() && sd_has_seed) sets.push_back("corpus.seed=" + std::to_string(sd_seed));
  if (train->parsed()) {
    if (tr_has_seed) sets.push_back("model.seed=" + std::to_string(tr_seed));
    if (tr_steps >= 0) sets.push_back("train.steps=" + std::to_string(tr_steps));
  }
  if (ablate->parsed() && ab_steps >= 0)
    sets.push_back("train.steps=" + std::to_string(ab_steps));
  int rc = make_run(preset, config, sets, h);
  if (rc != MLCA_OK) return fail(rc);

  if (synth->parsed()) {
    rc = mlca_run_synth_data(h.run, sd_out.c_str());
  } else if (train->parsed()) {
    rc = mlca_run_train(h.run, tr_data.c_str(), tr_out.c_str(), opt_cstr(tr_resume),
                        opt_cstr(tr_asr), opt_cstr(tr_vsr), tr_copy_dec ? 1 : 0,
                        tr_allow_large ? 1 : 0);
  } else if (eval->parsed()) {
    rc = mlca_run_eval(h.run, ev_ckpt.c_str(), ev_data.c_str(), ev_split.c_str(), ev_beam,
                       ev_batch, ev_out.c_str());
  } else if (decode->parsed()) {
    rc = mlca_run_decode(h.run, dc_ckpt.c_str(), dc_data.c_str(), dc_split.c_str(), dc_beam,
                         dc_batch, dc_out.c_str());
  } else if (ablate->parsed()) {
    rc = mlca_run_ablate(h.run, ab_data.c_str(), ab_out.c_str(), ab_seeds.data(),
                         static_cast<int>(ab_seeds.size()), ab_jobs);
  }
  print_output();
  return rc == MLCA_OK ? 0 : fail(rc);
}
