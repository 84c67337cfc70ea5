#ifndef MLCA_TRAIN_HPP
#define MLCA_TRAIN_HPP

#include <map>
#include <string>
#include <vector>

#include "data.hpp"
#include "model.hpp"

namespace mlca {

struct TrainOptions {
  std::int64_t steps = 2000;
  int batch_size = 16;
  double lr = 0.02;  // Noam-style base factor
  int warmup = 500;
  double clip = 5.0;
  std::string metric_log;  // JSON-lines path; empty disables logging
  std::string ckpt_path;   // final checkpoint path; empty disables saving
};

struct TrainResult {
  std::vector<double> loss_trace;  // total loss per executed step
  std::int64_t final_step = 0;
};

// Adam (beta 0.9/0.98, eps 1e-9) under an inverse-square-root warmup schedule
// with global-norm gradient clipping.
class Trainer {
 public:
  Trainer(AvsrModel& model, TrainOptions opt);

  void restore_optimizer(const Checkpoint& ckpt);

  // Runs steps [start_step+1 .. opt.steps]. Batch order is a pure function of
  // (model seed, step), so resumed runs replay the uninterrupted schedule.
  TrainResult run(const std::vector<UttRecord>& train_utts, const CorpusConfig& ccfg,
                  std::int64_t start_step = 0);

  const std::map<std::string, std::vector<double>>& adam_m() const { return m_; }
  const std::map<std::string, std::vector<double>>& adam_v() const { return v_; }

  double learning_rate(std::int64_t step) const;

 private:
  AvsrModel& model_;
  TrainOptions opt_;
  std::map<std::string, std::vector<double>> m_, v_;
};

}  // namespace mlca

#endif
