#ifndef MLCA_TENSOR_HPP
#define MLCA_TENSOR_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "error.hpp"

namespace mlca {

namespace detail {

struct Node {
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty = no gradient attached yet
  bool requires_grad = false;
};

}  // namespace detail

// Dense row-major tensor of doubles. Copy is shallow (shared storage); ops
// below always allocate fresh outputs.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double v, bool requires_grad = false);
  static Tensor from_data(std::vector<int> shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int dim(int i) const;
  std::int64_t numel() const { return static_cast<std::int64_t>(node_->value.size()); }

  std::vector<double>& data() { return node_->value; }
  const std::vector<double>& data() const { return node_->value; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool b) { node_->requires_grad = b; }

  // Gradient storage is attached lazily during backward(); absent gradient
  // means the tensor was unreachable from the loss.
  bool has_grad() const { return !node_->grad.empty(); }
  std::vector<double>& grad();              // allocates zeros if absent
  const std::vector<double>& grad() const;  // throws if absent
  void zero_grad();
  void drop_grad() { node_->grad.clear(); }

  double item() const;

  std::shared_ptr<detail::Node> node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::Node> node_;
};

// Define-by-run tape. Ops record their gradient rule while a Tape is active
// on the current thread; backward() replays the records in reverse.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* current();

  void record(std::function<void()> backward_fn);
  std::size_t size() const { return records_.size(); }

  // loss must be scalar; seeds d(loss)/d(loss)=1 and runs the tape backwards.
  void backward(const Tensor& loss);

 private:
  std::vector<std::function<void()>> records_;
  Tape* prev_ = nullptr;
};

std::string shape_str(const std::vector<int>& shape);
std::int64_t shape_numel(const std::vector<int>& shape);

}  // namespace mlca

#endif
