#include "gradcheck.hpp"

#include <cmath>

namespace mlca {

GradCheckResult grad_check(const LossFn& fn, std::vector<Tensor> inputs,
                           const std::string& label, double eps, double tol) {
  // analytic grads
  {
    Tape tape;
    Tensor loss = fn(inputs);
    tape.backward(loss);
  }
  GradCheckResult res;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor& x = inputs[k];
    if (!x.requires_grad()) continue;
    std::vector<double> analytic =
        x.has_grad() ? x.grad() : std::vector<double>(x.data().size(), 0.0);
    for (std::size_t i = 0; i < x.data().size(); ++i) {
      const double orig = x.data()[i];
      x.data()[i] = orig + eps;
      const double fp = fn(inputs).item();
      x.data()[i] = orig - eps;
      const double fm = fn(inputs).item();
      x.data()[i] = orig;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double denom = std::max({1.0, std::abs(numeric), std::abs(analytic[i])});
      const double rel = std::abs(numeric - analytic[i]) / denom;
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst = label + " input#" + std::to_string(k) + "[" + std::to_string(i) + "]";
      }
    }
    x.drop_grad();
  }
  res.ok = res.max_rel_err < tol;
  return res;
}

}  // namespace mlca
