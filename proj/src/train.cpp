#include "train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

namespace mlca {

Trainer::Trainer(AvsrModel& model, TrainOptions opt) : model_(model), opt_(std::move(opt)) {
  for (const auto& [name, t] : model_.params.all()) {
    m_[name].assign(t.data().size(), 0.0);
    v_[name].assign(t.data().size(), 0.0);
  }
}

void Trainer::restore_optimizer(const Checkpoint& ckpt) {
  for (auto& [name, buf] : m_) {
    auto it = ckpt.arrays.find("adam.m/" + name);
    if (it == ckpt.arrays.end())
      throw ConfigError("checkpoint has no optimizer state for " + name);
    buf = it->second.second;
  }
  for (auto& [name, buf] : v_) {
    auto it = ckpt.arrays.find("adam.v/" + name);
    if (it == ckpt.arrays.end())
      throw ConfigError("checkpoint has no optimizer state for " + name);
    buf = it->second.second;
  }
}

double Trainer::learning_rate(std::int64_t step) const {
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(opt_.warmup);
  return opt_.lr * std::min(1.0 / std::sqrt(s), s / (w * std::sqrt(w)));
}

TrainResult Trainer::run(const std::vector<UttRecord>& train_utts, const CorpusConfig& ccfg,
                         std::int64_t start_step) {
  TrainResult res;
  std::ofstream log;
  if (!opt_.metric_log.empty()) {
    log.open(opt_.metric_log, start_step == 0 ? std::ios::trunc : std::ios::app);
    if (!log) throw PathError("cannot open metric log: " + opt_.metric_log);
  }
  const std::int64_t batches_per_epoch =
      (static_cast<std::int64_t>(train_utts.size()) + opt_.batch_size - 1) / opt_.batch_size;
  std::int64_t cached_epoch = -1;
  std::vector<std::vector<int>> order;

  // snapshot for "retain last good checkpoint" on divergence
  std::vector<std::vector<double>> last_good;
  auto snapshot = [&]() {
    last_good.clear();
    for (const auto& [name, t] : model_.params.all()) last_good.push_back(t.data());
  };
  auto restore_last_good = [&]() {
    std::size_t i = 0;
    for (auto& [name, t] : model_.params.all()) t.data() = last_good[i++];
  };
  snapshot();

  const double beta1 = 0.9, beta2 = 0.98, eps = 1e-9;
  std::int64_t last_good_step = start_step;

  for (std::int64_t step = start_step + 1; step <= opt_.steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::int64_t g = step - 1;
    const std::int64_t epoch = g / batches_per_epoch;
    if (epoch != cached_epoch) {
      order = batch_order(train_utts, opt_.batch_size, model_.cfg.seed, static_cast<int>(epoch));
      cached_epoch = epoch;
    }
    Batch batch = assemble_batch(train_utts, order[g % batches_per_epoch], ccfg);

    try {
      model_.params.zero_grad();
      LossBreakdown lb;
      {
        Tape tape;
        lb = model_.forward_train(batch, model_.make_ctx(/*training=*/true, step));
        tape.backward(lb.total);
      }
      // global-norm clip
      double sq = 0.0;
      for (const auto& [name, t] : model_.params.all())
        if (t.has_grad())
          for (double gv : t.grad()) sq += gv * gv;
      const double gnorm = std::sqrt(sq);
      if (!std::isfinite(gnorm)) throw DivergedError("non-finite gradient norm");
      const double clip_scale = gnorm > opt_.clip ? opt_.clip / gnorm : 1.0;
      const double lr = learning_rate(step);
      const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      for (auto& [name, t] : model_.params.all()) {
        if (!t.has_grad()) continue;
        auto& m = m_[name];
        auto& v = v_[name];
        auto& w = t.data();
        const auto& gr = t.grad();
        for (std::size_t i = 0; i < w.size(); ++i) {
          const double gi = gr[i] * clip_scale;
          m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
          v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
          w[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
        }
      }
      res.loss_trace.push_back(lb.total.item());
      last_good_step = step;
      snapshot();
      if (log) {
        const double wall_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                .count();
        nlohmann::json jl = {{"step", step},
                             {"l_att", lb.l_att.item()},
                             {"l_ctc_final", lb.l_ctc_final.item()},
                             {"l_interctc_1", lb.inter_value(0)},
                             {"l_interctc_2", lb.inter_value(1)},
                             {"total", lb.total.item()},
                             {"grad_norm", gnorm},
                             {"wall_ms", wall_ms}};
        log << jl.dump() << "\n";
      }
    } catch (const DivergedError&) {
      restore_last_good();
      if (!opt_.ckpt_path.empty())
        save_checkpoint(opt_.ckpt_path, model_, last_good_step, &m_, &v_);
      throw;
    }
  }
  res.final_step = opt_.steps;
  if (!opt_.ckpt_path.empty()) save_checkpoint(opt_.ckpt_path, model_, res.final_step, &m_, &v_);
  return res;
}

}  // namespace mlca
