#ifndef MLCA_ORACLES_HPP
#define MLCA_ORACLES_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace mlca {

// Brute-force CTC: enumerates all (V+1)^T frame labelings, collapses repeats,
// deletes blanks, and sums the probability of labelings matching `target`.
// Independent of the forward-backward implementation; only viable for tiny
// T/V. Returns the negative log-likelihood.
double exhaustive_ctc_nll(const std::vector<double>& log_probs, int t_len, int n_classes,
                          const std::vector<int>& target);

struct SuiteResult {
  bool ok = true;
  double worst = 0.0;  // max deviation seen
  int cases = 0;
  std::string detail;
};

// Random-instance equivalence of ctc_loss against the enumeration oracle
// (T<=6, V<=4, L<=3), tolerance 1e-6 in the log domain.
SuiteResult run_ctc_oracle_suite(int n_cases, std::uint64_t seed, std::string* report);

}  // namespace mlca

#endif
