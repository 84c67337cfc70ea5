#ifndef MLCA_RUNNER_HPP
#define MLCA_RUNNER_HPP

#include <string>
#include <vector>

#include "config.hpp"
#include "decode.hpp"
#include "model.hpp"

namespace mlca {

// Command layer shared by the C API and the test suite. Each cmd_* writes its
// artifacts under an output directory and returns a human-readable summary.

void cmd_synth_data(const RunConfig& cfg, const std::string& data_dir, std::string* summary);

struct TrainRunOptions {
  std::string resume_from;  // checkpoint path; continues the same schedule
  std::string init_asr;     // pretrained single-modality checkpoints; both or
  std::string init_vsr;     // neither
  bool copy_decoder = false;
  bool allow_large = false;  // opt-in for full-size geometries
};

// Trains per cfg on <data_dir>, writing ckpt.bin and metrics.jsonl under
// <out_dir>. Returns the final dev evaluation.
EvalResult cmd_train(RunConfig cfg, const std::string& data_dir, const std::string& out_dir,
                     const TrainRunOptions& opt, std::string* summary);

EvalResult cmd_eval(const std::string& ckpt_path, const std::string& data_dir,
                    const std::string& split, int beam, int batch_size,
                    const std::string& out_dir, std::string* summary);

// Eval plus per-utterance hypotheses (hyps.jsonl) under <out_dir>.
EvalResult cmd_decode(const std::string& ckpt_path, const std::string& data_dir,
                      const std::string& split, int beam, int batch_size,
                      const std::string& out_dir, std::string* summary);

struct AblateRow {
  std::string variant;
  std::uint64_t seed = 0;
  EvalResult eval;
  std::int64_t n_params = 0;
};

struct AblateResult {
  std::vector<AblateRow> rows;
  // variant -> seed-median attention CER, variant order preserved
  std::vector<std::pair<std::string, double>> medians;
};

// Trains and dev-scores the fusion grid (asr, vsr, mlca variants, add, mlp)
// for each seed, `jobs` runs in parallel. Writes ablate.jsonl and an aligned
// ablate.txt table under <out_dir>.
AblateResult cmd_ablate(const RunConfig& cfg, const std::string& data_dir,
                        const std::string& out_dir, const std::vector<std::uint64_t>& seeds,
                        int jobs, std::string* summary);

bool cmd_gradcheck(int n_cfg, std::uint64_t seed, std::string* report);

bool cmd_ctc_oracle(int n_cases, std::uint64_t seed, std::string* report);

}  // namespace mlca

#endif
