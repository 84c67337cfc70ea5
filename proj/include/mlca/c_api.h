#ifndef MLCA_C_API_H
#define MLCA_C_API_H

/* C interface to the audio-visual recognizer. All functions return one of the
 * MLCA_* status codes; on failure mlca_last_error() describes what went
 * wrong. Commands that produce human-readable output leave it in
 * mlca_last_output(). Both strings are thread-local and valid until the next
 * call on the same thread. */

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define MLCA_OK 0
#define MLCA_ERR_USAGE 1      /* bad config, arguments, or paths */
#define MLCA_ERR_VERIFY 2     /* failed check or internal contract */
#define MLCA_ERR_DIVERGED 3   /* training produced non-finite loss */

/* Opaque run handle: a resolved configuration that commands execute against. */
typedef struct mlca_run mlca_run;

/* preset: "desk" or "paper-shape" (NULL means desk). config_path: optional
 * INI-style file layered on top of the preset (NULL to skip). */
int mlca_run_create(const char* preset, const char* config_path, mlca_run** out);

/* Applies a "section.key=value" override, e.g. "model.fusion=add". */
int mlca_run_set(mlca_run* run, const char* override_spec);

void mlca_run_destroy(mlca_run* run);

/* Generates the synthetic corpus under data_dir. */
int mlca_run_synth_data(mlca_run* run, const char* data_dir);

/* Trains on data_dir, writing ckpt.bin / metrics.jsonl / eval.json under
 * out_dir. resume / init_asr+init_vsr are optional checkpoint paths (NULL to
 * skip); pretrained init needs both and starts the fusion modules as no-ops. */
int mlca_run_train(mlca_run* run, const char* data_dir, const char* out_dir, const char* resume,
                   const char* init_asr, const char* init_vsr, int copy_decoder,
                   int allow_large);

/* Scores ckpt on a split ("train", "dev", "eval"); writes eval.json. */
int mlca_run_eval(mlca_run* run, const char* ckpt, const char* data_dir, const char* split,
                  int beam, int batch_size, const char* out_dir);

/* Like eval, but also writes per-utterance hypotheses to hyps.jsonl. */
int mlca_run_decode(mlca_run* run, const char* ckpt, const char* data_dir, const char* split,
                    int beam, int batch_size, const char* out_dir);

/* Trains the fusion grid (asr, vsr, mlca variants, add, mlp) once per seed,
 * jobs runs in parallel; writes ablate.jsonl and ablate.txt. */
int mlca_run_ablate(mlca_run* run, const char* data_dir, const char* out_dir,
                    const uint64_t* seeds, int n_seeds, int jobs);

/* Finite-difference check of every operator and block, n_cfg random
 * configurations each. Returns MLCA_ERR_VERIFY if any gradient disagrees. */
int mlca_gradcheck(int n_cfg, uint64_t seed);

/* Compares the CTC loss against brute-force path enumeration on n_cases
 * random small instances. */
int mlca_ctc_oracle(int n_cases, uint64_t seed);

const char* mlca_last_error(void);
const char* mlca_last_output(void);

#ifdef __cplusplus
}
#endif

#endif
