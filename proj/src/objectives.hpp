#ifndef MLCA_OBJECTIVES_HPP
#define MLCA_OBJECTIVES_HPP

#include <vector>

#include "nn.hpp"
#include "tensor.hpp"

namespace mlca {

// Negative log-likelihood of `target` under CTC, forward algorithm over the
// blank-interleaved label sequence, entirely in log space. log_probs is
// [T, V+1] with normalized rows; blank index is 0 and targets never contain
// it. Differentiable (forward-backward gradient).
Tensor ctc_loss(const Tensor& log_probs, const std::vector<int>& target);

// Per-utterance ctc_loss on valid frames, averaged over the batch.
// log_probs [B, T, V+1]; lens gives valid frames per sequence.
Tensor ctc_loss_batch(const Tensor& log_probs, const std::vector<int>& lens,
                      const std::vector<std::vector<int>>& targets);

// Minimum frames CTC needs for a target (length + adjacent repeats).
int ctc_min_frames(const std::vector<int>& target);

// Mean over valid positions of KL(smoothed one-hot || softmax(logits)).
// logits [B, L, V]; targets padded with -1 (excluded).
Tensor label_smoothed_ce(const Tensor& logits, const std::vector<std::vector<int>>& targets,
                         double smoothing);

struct LossBreakdown {
  Tensor l_att;
  Tensor l_ctc_final;
  std::vector<Tensor> l_inter;  // enabled Inter-CTC terms (CA1, CA2)
  Tensor total;
  double lambda_ctc = 0.3;
  double lambda_inter = 0.5;

  double inter_value(std::size_t i) const {
    return i < l_inter.size() ? l_inter[i].item() : 0.0;
  }
};

// total = (1-lc)*att + lc*[(1-li)*ctc + li*mean(inter)]; with no inter terms
// the inner bracket degenerates to the final CTC loss alone.
LossBreakdown joint_loss(Tensor l_att, Tensor l_ctc_final, std::vector<Tensor> l_inter,
                         double lambda_ctc, double lambda_inter);

}  // namespace mlca

#endif
