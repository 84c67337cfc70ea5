#include "tensor.hpp"

#include <sstream>

namespace mlca {

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

std::int64_t shape_numel(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  auto n = std::make_shared<detail::Node>();
  n->value.assign(static_cast<std::size_t>(shape_numel(shape)), 0.0);
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::full(std::vector<int> shape, double v, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (double& x : t.data()) x = v;
  return t;
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data,
                         bool requires_grad) {
  if (shape_numel(shape) != static_cast<std::int64_t>(data.size()))
    throw DimensionError("from_data: shape " + shape_str(shape) + " does not match data size " +
                         std::to_string(data.size()));
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->value = std::move(data);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from_data({}, {v}, requires_grad);
}

int Tensor::dim(int i) const {
  if (i < 0) i += rank();
  if (i < 0 || i >= rank())
    throw DimensionError("dim index " + std::to_string(i) + " out of range for " +
                         shape_str(shape()));
  return node_->shape[static_cast<std::size_t>(i)];
}

std::vector<double>& Tensor::grad() {
  if (node_->grad.empty()) node_->grad.assign(node_->value.size(), 0.0);
  return node_->grad;
}

const std::vector<double>& Tensor::grad() const {
  if (node_->grad.empty())
    throw ContractViolation("grad() on tensor with no gradient attached");
  return node_->grad;
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) node_->grad.assign(node_->value.size(), 0.0);
}

double Tensor::item() const {
  if (numel() != 1)
    throw ContractViolation("item() requires a scalar, got shape " + shape_str(shape()));
  return node_->value[0];
}

namespace {
thread_local Tape* g_current_tape = nullptr;
}

Tape::Tape() : prev_(g_current_tape) { g_current_tape = this; }

Tape::~Tape() { g_current_tape = prev_; }

Tape* Tape::current() { return g_current_tape; }

void Tape::record(std::function<void()> backward_fn) {
  records_.push_back(std::move(backward_fn));
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1)
    throw ContractViolation("backward() requires a scalar loss, got shape " +
                            shape_str(loss.shape()));
  loss.node()->grad.assign(1, 1.0);
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
}

}  // namespace mlca
