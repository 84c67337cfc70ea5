#include "objectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mlca {

namespace {

constexpr double kLogZero = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kLogZero) return b;
  if (b == kLogZero) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(std::min(a, b) - m));
}

void ensure_grad(detail::Node* n) {
  if (n->grad.empty()) n->grad.assign(n->value.size(), 0.0);
}

}  // namespace

int ctc_min_frames(const std::vector<int>& target) {
  int repeats = 0;
  for (std::size_t i = 1; i < target.size(); ++i)
    if (target[i] == target[i - 1]) ++repeats;
  return static_cast<int>(target.size()) + repeats;
}

Tensor ctc_loss(const Tensor& log_probs, const std::vector<int>& target) {
  if (log_probs.rank() != 2)
    throw DimensionError("ctc_loss: expected log_probs [T, V+1], got " +
                         shape_str(log_probs.shape()));
  const int T = log_probs.shape()[0];
  const int V1 = log_probs.shape()[1];
  const int L = static_cast<int>(target.size());
  for (int c : target)
    if (c <= 0 || c >= V1)
      throw DimensionError("ctc_loss: target symbol " + std::to_string(c) +
                           " outside [1," + std::to_string(V1 - 1) + "]");
  if (T < ctc_min_frames(target))
    throw InfeasibleAlignmentError("ctc_loss: " + std::to_string(T) +
                                   " frames cannot align a target needing " +
                                   std::to_string(ctc_min_frames(target)));
  const double* lp = log_probs.data().data();
  // rows must be normalized log-distributions
  for (int t = 0; t < T; ++t) {
    double s = kLogZero;
    for (int k = 0; k < V1; ++k) s = log_add(s, lp[(std::int64_t)t * V1 + k]);
    if (std::abs(s) > 1e-6)
      throw ContractViolation("ctc_loss: log_probs row " + std::to_string(t) +
                              " is not normalized (logsumexp=" + std::to_string(s) + ")");
  }

  const int S = 2 * L + 1;
  auto lab = [&](int s) { return (s % 2 == 0) ? 0 : target[s / 2]; };
  std::vector<double> alpha((std::size_t)T * S, kLogZero), beta((std::size_t)T * S, kLogZero);
  auto a = [&](int t, int s) -> double& { return alpha[(std::size_t)t * S + s]; };
  auto b = [&](int t, int s) -> double& { return beta[(std::size_t)t * S + s]; };

  a(0, 0) = lp[0 * V1 + lab(0)];
  if (S > 1) a(0, 1) = lp[0 * V1 + lab(1)];
  for (int t = 1; t < T; ++t)
    for (int s = 0; s < S; ++s) {
      double acc = a(t - 1, s);
      if (s >= 1) acc = log_add(acc, a(t - 1, s - 1));
      if (s >= 2 && lab(s) != 0 && lab(s) != lab(s - 2)) acc = log_add(acc, a(t - 1, s - 2));
      a(t, s) = acc == kLogZero ? kLogZero : acc + lp[(std::int64_t)t * V1 + lab(s)];
    }
  double log_p = a(T - 1, S - 1);
  if (S > 1) log_p = log_add(log_p, a(T - 1, S - 2));
  if (log_p == kLogZero)
    throw InfeasibleAlignmentError("ctc_loss: no feasible alignment");

  Tensor out = Tensor::scalar(-log_p);
  if (Tape::current() && log_probs.requires_grad()) {
    out.set_requires_grad(true);
    // beta includes the emission at t, matching alpha
    b(T - 1, S - 1) = lp[(std::int64_t)(T - 1) * V1 + lab(S - 1)];
    if (S > 1) b(T - 1, S - 2) = lp[(std::int64_t)(T - 1) * V1 + lab(S - 2)];
    for (int t = T - 2; t >= 0; --t)
      for (int s = 0; s < S; ++s) {
        double acc = b(t + 1, s);
        if (s + 1 < S) acc = log_add(acc, b(t + 1, s + 1));
        if (s + 2 < S && lab(s + 2) != 0 && lab(s + 2) != lab(s))
          acc = log_add(acc, b(t + 1, s + 2));
        b(t, s) = acc == kLogZero ? kLogZero : acc + lp[(std::int64_t)t * V1 + lab(s)];
      }
    auto lpn = log_probs.node();
    auto on = out.node();
    auto grad_lp = std::make_shared<std::vector<double>>((std::size_t)T * V1, 0.0);
    for (int t = 0; t < T; ++t) {
      std::vector<double> lse(V1, kLogZero);
      for (int s = 0; s < S; ++s) {
        // alpha and beta both carry the emission at t; one copy cancels below
        const double ab = a(t, s) + b(t, s) - lp[(std::int64_t)t * V1 + lab(s)];
        lse[lab(s)] = log_add(lse[lab(s)], ab);
      }
      for (int k = 0; k < V1; ++k)
        if (lse[k] != kLogZero)
          (*grad_lp)[(std::size_t)t * V1 + k] = -std::exp(lse[k] - log_p);
    }
    Tape::current()->record([=]() {
      if (on->grad.empty()) return;
      ensure_grad(lpn.get());
      const double g = on->grad[0];
      for (std::size_t i = 0; i < grad_lp->size(); ++i) lpn->grad[i] += g * (*grad_lp)[i];
    });
  } else {
    out.set_requires_grad(log_probs.requires_grad());
  }
  return out;
}

Tensor ctc_loss_batch(const Tensor& log_probs, const std::vector<int>& lens,
                      const std::vector<std::vector<int>>& targets) {
  if (log_probs.rank() != 3)
    throw DimensionError("ctc_loss_batch: expected [B, T, V+1]");
  const int B = log_probs.shape()[0];
  if (static_cast<int>(lens.size()) != B || static_cast<int>(targets.size()) != B)
    throw DimensionError("ctc_loss_batch: batch size mismatch");
  const int V1 = log_probs.shape()[2];
  Tensor acc;
  for (int i = 0; i < B; ++i) {
    Tensor rows = reshape(slice(slice(log_probs, 0, i, 1), 1, 0, lens[i]), {lens[i], V1});
    Tensor li = ctc_loss(rows, targets[i]);
    acc = acc.defined() ? add(acc, li) : li;
  }
  return scale(acc, 1.0 / B);
}

Tensor label_smoothed_ce(const Tensor& logits, const std::vector<std::vector<int>>& targets,
                         double smoothing) {
  if (logits.rank() != 3)
    throw DimensionError("label_smoothed_ce: expected logits [B, L, V]");
  const int B = logits.shape()[0], L = logits.shape()[1], V = logits.shape()[2];
  if (static_cast<int>(targets.size()) != B)
    throw DimensionError("label_smoothed_ce: batch size mismatch");
  Tensor q = Tensor::zeros({B, L, V});
  double* pq = q.data().data();
  int n_valid = 0;
  double entropy_term = 0.0;  // sum over valid positions of sum_k q log q
  const double off = V > 1 ? smoothing / (V - 1) : 0.0;
  const double on = 1.0 - smoothing;
  for (int b = 0; b < B; ++b) {
    if (static_cast<int>(targets[b].size()) > L)
      throw DimensionError("label_smoothed_ce: target longer than logits");
    for (std::size_t l = 0; l < targets[b].size(); ++l) {
      const int y = targets[b][l];
      if (y < 0) continue;  // padding
      if (y >= V)
        throw DimensionError("label_smoothed_ce: target id " + std::to_string(y) +
                             " out of vocab " + std::to_string(V));
      ++n_valid;
      for (int k = 0; k < V; ++k) {
        const double qk = (k == y) ? on : off;
        pq[((std::int64_t)b * L + l) * V + k] = qk;
        if (qk > 0.0) entropy_term += qk * std::log(qk);
      }
    }
  }
  if (n_valid == 0) throw DimensionError("label_smoothed_ce: all-padding batch");
  Tensor lp = log_softmax(logits, -1);
  Tensor cross = neg(sum_all(mul(q, lp)));  // -sum q log p over valid positions
  return scale(add(cross, Tensor::scalar(entropy_term)), 1.0 / n_valid);
}

LossBreakdown joint_loss(Tensor l_att, Tensor l_ctc_final, std::vector<Tensor> l_inter,
                         double lambda_ctc, double lambda_inter) {
  auto check_finite = [](const Tensor& t, const char* name) {
    if (!std::isfinite(t.item()))
      throw DivergedError(std::string("joint_loss: non-finite component ") + name);
  };
  check_finite(l_att, "l_att");
  check_finite(l_ctc_final, "l_ctc_final");
  for (std::size_t i = 0; i < l_inter.size(); ++i)
    check_finite(l_inter[i], i == 0 ? "l_interctc_1" : "l_interctc_2");

  LossBreakdown out;
  out.l_att = l_att;
  out.l_ctc_final = l_ctc_final;
  out.l_inter = l_inter;
  out.lambda_ctc = lambda_ctc;
  out.lambda_inter = lambda_inter;
  Tensor inner = l_ctc_final;
  if (!l_inter.empty()) {
    Tensor mean_inter = l_inter[0];
    for (std::size_t i = 1; i < l_inter.size(); ++i) mean_inter = add(mean_inter, l_inter[i]);
    mean_inter = scale(mean_inter, 1.0 / l_inter.size());
    inner = add(scale(l_ctc_final, 1.0 - lambda_inter), scale(mean_inter, lambda_inter));
  }
  out.total = add(scale(l_att, 1.0 - lambda_ctc), scale(inner, lambda_ctc));
  return out;
}

}  // namespace mlca
