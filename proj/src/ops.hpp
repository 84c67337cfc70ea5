#ifndef MLCA_OPS_HPP
#define MLCA_OPS_HPP

#include <array>
#include <cstdint>
#include <vector>

#include "tensor.hpp"

namespace mlca {

// Elementwise with NumPy-style broadcasting (dims align right, equal or 1).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor neg(const Tensor& a);

Tensor exp_op(const Tensor& a);
Tensor log_op(const Tensor& a);
Tensor sqrt_op(const Tensor& a);
Tensor tanh_op(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor swish(const Tensor& a);

// axis < 0 counts from the back. keepdim keeps a size-1 axis.
Tensor reduce_sum(const Tensor& a, int axis, bool keepdim = false);
Tensor reduce_mean(const Tensor& a, int axis, bool keepdim = false);
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);

// Batched matrix product: [..,M,K] x [..,K,N] -> [..,M,N]; leading dims must
// match, or either operand may be rank-2 (shared across the batch).
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor transpose(const Tensor& a, std::vector<int> perm);
Tensor transpose_last2(const Tensor& a);
Tensor reshape(const Tensor& a, std::vector<int> shape);
Tensor slice(const Tensor& a, int axis, int start, int len);
Tensor concat(const std::vector<Tensor>& parts, int axis);

Tensor softmax(const Tensor& a, int axis);
Tensor log_softmax(const Tensor& a, int axis);

// Gathers rows of table [V,D]; output is [ids.size(), D].
Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids);

// x [B,T,Cin], w [Cout,Cin,K], b [Cout]; zero padding `pad` on both sides.
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);

// Per-channel temporal convolution, stride 1, 'same' output length.
// x [B,T,D], w [D,K].
Tensor depthwise_conv1d(const Tensor& x, const Tensor& w);

// x [B,T,H,W,Cin], w [Cout,Cin,Kt,Kh,Kw], b [Cout]; stride 1, 'same' padding.
Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b);

// Inverted dropout with a counter-based mask: `key` fully determines the
// mask, so a run is reproducible from (seed, step, call index).
Tensor dropout(const Tensor& x, double rate, std::uint64_t key);

std::uint64_t splitmix64(std::uint64_t x);
// Uniform in [0,1) from a hash of (key, index).
double hash_uniform(std::uint64_t key, std::uint64_t index);

}  // namespace mlca

#endif
