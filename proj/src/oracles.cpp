#include "oracles.hpp"

#include <cstdio>
#include <cmath>
#include <limits>

#include "objectives.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace mlca {

namespace {
std::string fmt_e(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3e", x);
  return buf;
}
}  // namespace

double exhaustive_ctc_nll(const std::vector<double>& log_probs, int t_len, int n_classes,
                          const std::vector<int>& target) {
  const int v1 = n_classes + 1;  // with blank
  double total = -std::numeric_limits<double>::infinity();
  std::vector<int> path(t_len, 0);
  auto log_add = [](double a, double b) {
    if (a == -std::numeric_limits<double>::infinity()) return b;
    if (b == -std::numeric_limits<double>::infinity()) return a;
    const double m = std::max(a, b);
    return m + std::log1p(std::exp(std::min(a, b) - m));
  };
  for (;;) {
    // collapse repeats, then delete blanks
    std::vector<int> collapsed;
    int prev = -1;
    for (int s : path) {
      if (s != prev && s != 0) collapsed.push_back(s);
      prev = s;
    }
    if (collapsed == target) {
      double lp = 0.0;
      for (int t = 0; t < t_len; ++t) lp += log_probs[(std::size_t)t * v1 + path[t]];
      total = log_add(total, lp);
    }
    int t = t_len - 1;
    while (t >= 0 && ++path[t] == v1) path[t--] = 0;
    if (t < 0) break;
  }
  return -total;
}

SuiteResult run_ctc_oracle_suite(int n_cases, std::uint64_t seed, std::string* report) {
  Rng rng(seed);
  SuiteResult res;
  while (res.cases < n_cases) {
    const int T = 1 + rng.randint(6);
    const int V = 1 + rng.randint(4);
    const int Lmax = std::min(3, T);
    const int L = rng.randint(Lmax + 1);
    std::vector<int> target(L);
    for (int i = 0; i < L; ++i) target[i] = 1 + rng.randint(V);
    if (T < ctc_min_frames(target)) continue;
    // random normalized log-distributions per frame
    std::vector<double> lp((std::size_t)T * (V + 1));
    for (int t = 0; t < T; ++t) {
      double z = -std::numeric_limits<double>::infinity();
      for (int k = 0; k <= V; ++k) {
        lp[(std::size_t)t * (V + 1) + k] = rng.uniform(-3.0, 3.0);
        const double x = lp[(std::size_t)t * (V + 1) + k];
        z = std::max(z, x);
      }
      double s = 0.0;
      for (int k = 0; k <= V; ++k) s += std::exp(lp[(std::size_t)t * (V + 1) + k] - z);
      const double lse = z + std::log(s);
      for (int k = 0; k <= V; ++k) lp[(std::size_t)t * (V + 1) + k] -= lse;
    }
    const double oracle = exhaustive_ctc_nll(lp, T, V, target);
    const double fb = ctc_loss(Tensor::from_data({T, V + 1}, lp), target).item();
    const double diff = std::abs(oracle - fb);
    res.worst = std::max(res.worst, diff);
    if (diff > 1e-6) {
      res.ok = false;
      if (report)
        *report += "FAIL T=" + std::to_string(T) + " V=" + std::to_string(V) +
                   " L=" + std::to_string(L) + " diff=" + fmt_e(diff) + "\n";
    }
    ++res.cases;
  }
  if (report)
    *report += "ctc-oracle: " + std::to_string(res.cases) +
               " cases, max |forward-backward - enumeration| = " + fmt_e(res.worst) +
               (res.ok ? " [ok]\n" : " [FAIL]\n");
  return res;
}

}  // namespace mlca
