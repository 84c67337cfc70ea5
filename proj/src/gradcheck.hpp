#ifndef MLCA_GRADCHECK_HPP
#define MLCA_GRADCHECK_HPP

#include <functional>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace mlca {

struct GradCheckResult {
  double max_rel_err = 0.0;
  bool ok = true;
  std::string worst;  // where the max error occurred
};

using LossFn = std::function<Tensor(const std::vector<Tensor>&)>;

// Central finite differences against backward() for every element of every
// input with requires_grad set. eps=1e-5, float64 throughout.
GradCheckResult grad_check(const LossFn& fn, std::vector<Tensor> inputs,
                           const std::string& label, double eps = 1e-5, double tol = 1e-4);

// Full suite over all ops and composite blocks; n_cfg random configurations
// per case. Appends one line per case to report if non-null.
GradCheckResult run_gradcheck_suite(int n_cfg, std::uint64_t seed, std::string* report);

}  // namespace mlca

#endif
