#include "ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>

namespace mlca {

namespace {

using detail::Node;
using NodeP = std::shared_ptr<Node>;
using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

void ensure_grad(Node* n) {
  if (n->grad.empty()) n->grad.assign(n->value.size(), 0.0);
}

bool tracing(std::initializer_list<const Tensor*> inputs) {
  if (!Tape::current()) return false;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

int norm_axis(int axis, int rank, const char* what) {
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank)
    throw DimensionError(std::string(what) + ": axis out of range for rank " +
                         std::to_string(rank));
  return axis;
}

struct BCast {
  std::vector<int> out_shape;
  std::vector<std::int64_t> sa, sb;  // per-out-dim strides, 0 where broadcast
  std::int64_t n = 1;
};

BCast make_bcast(const std::vector<int>& a, const std::vector<int>& b, const char* what) {
  int r = static_cast<int>(std::max(a.size(), b.size()));
  BCast bc;
  bc.out_shape.resize(r);
  bc.sa.resize(r);
  bc.sb.resize(r);
  std::vector<std::int64_t> full_sa(r, 0), full_sb(r, 0);
  // dense strides aligned right
  std::int64_t s = 1;
  for (int i = static_cast<int>(a.size()) - 1; i >= 0; --i) {
    full_sa[r - (static_cast<int>(a.size()) - i)] = s;
    s *= a[i];
  }
  s = 1;
  for (int i = static_cast<int>(b.size()) - 1; i >= 0; --i) {
    full_sb[r - (static_cast<int>(b.size()) - i)] = s;
    s *= b[i];
  }
  for (int d = 0; d < r; ++d) {
    int ad = d - (r - static_cast<int>(a.size()));
    int bd = d - (r - static_cast<int>(b.size()));
    int av = ad >= 0 ? a[ad] : 1;
    int bv = bd >= 0 ? b[bd] : 1;
    if (av != bv && av != 1 && bv != 1)
      throw DimensionError(std::string(what) + ": shapes " + shape_str(a) + " and " +
                           shape_str(b) + " are not broadcastable");
    bc.out_shape[d] = std::max(av, bv);
    bc.sa[d] = (av == 1 && bc.out_shape[d] != 1) ? 0 : full_sa[d];
    bc.sb[d] = (bv == 1 && bc.out_shape[d] != 1) ? 0 : full_sb[d];
    bc.n *= bc.out_shape[d];
  }
  return bc;
}

// Calls f(i, ia, ib) for every output element in linear order.
template <class F>
void bcast_apply(const BCast& bc, F&& f) {
  int r = static_cast<int>(bc.out_shape.size());
  if (r == 0) {
    f(0, 0, 0);
    return;
  }
  std::vector<int> idx(r, 0);
  std::int64_t ia = 0, ib = 0;
  for (std::int64_t i = 0;; ++i) {
    f(i, ia, ib);
    int d = r - 1;
    for (; d >= 0; --d) {
      ++idx[d];
      ia += bc.sa[d];
      ib += bc.sb[d];
      if (idx[d] < bc.out_shape[d]) break;
      idx[d] = 0;
      ia -= bc.sa[d] * bc.out_shape[d];
      ib -= bc.sb[d] * bc.out_shape[d];
    }
    if (d < 0) break;
  }
}

// Binary elementwise op: val(a,b), and partials da(a,b), db(a,b).
template <class V, class Da, class Db>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, V val, Da da, Db db) {
  const bool same = a.shape() == b.shape();
  Tensor out;
  BCast bc;
  if (same) {
    out = Tensor::zeros(a.shape());
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    double* po = out.data().data();
    const std::int64_t n = a.numel();
    for (std::int64_t i = 0; i < n; ++i) po[i] = val(pa[i], pb[i]);
  } else {
    bc = make_bcast(a.shape(), b.shape(), name);
    out = Tensor::zeros(bc.out_shape);
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    double* po = out.data().data();
    bcast_apply(bc, [&](std::int64_t i, std::int64_t ia, std::int64_t ib) {
      po[i] = val(pa[ia], pb[ib]);
    });
  }
  if (tracing({&a, &b})) {
    out.set_requires_grad(true);
    NodeP an = a.node(), bn = b.node(), on = out.node();
    bool ga = a.requires_grad(), gb = b.requires_grad();
    Tape::current()->record([=]() {
      if (on->grad.empty()) return;
      const double* go = on->grad.data();
      if (ga) ensure_grad(an.get());
      if (gb) ensure_grad(bn.get());
      if (an->shape == bn->shape) {
        const std::int64_t n = static_cast<std::int64_t>(on->value.size());
        for (std::int64_t i = 0; i < n; ++i) {
          if (ga) an->grad[i] += go[i] * da(an->value[i], bn->value[i]);
          if (gb) bn->grad[i] += go[i] * db(an->value[i], bn->value[i]);
        }
      } else {
        BCast p = make_bcast(an->shape, bn->shape, name);
        bcast_apply(p, [&](std::int64_t i, std::int64_t ia, std::int64_t ib) {
          if (ga) an->grad[ia] += go[i] * da(an->value[ia], bn->value[ib]);
          if (gb) bn->grad[ib] += go[i] * db(an->value[ia], bn->value[ib]);
        });
      }
    });
  } else {
    out.set_requires_grad(a.requires_grad() || b.requires_grad());
  }
  return out;
}

// Unary elementwise op: val(x), derivative d(x, y) where y = val(x).
template <class V, class D>
Tensor unary_op(const Tensor& a, V val, D deriv) {
  Tensor out = Tensor::zeros(a.shape());
  const double* pa = a.data().data();
  double* po = out.data().data();
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) po[i] = val(pa[i]);
  if (tracing({&a})) {
    out.set_requires_grad(true);
    NodeP an = a.node(), on = out.node();
    Tape::current()->record([=]() {
      if (on->grad.empty()) return;
      ensure_grad(an.get());
      const std::int64_t m = static_cast<std::int64_t>(on->value.size());
      for (std::int64_t i = 0; i < m; ++i)
        an->grad[i] += on->grad[i] * deriv(an->value[i], on->value[i]);
    });
  } else {
    out.set_requires_grad(a.requires_grad());
  }
  return out;
}

std::vector<std::int64_t> dense_strides(const std::vector<int>& shape) {
  std::vector<std::int64_t> s(shape.size(), 1);
  for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i)
    s[i] = s[i + 1] * shape[i + 1];
  return s;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

Tensor scale(const Tensor& a, double c) {
  return unary_op(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor exp_op(const Tensor& a) {
  return unary_op(a, [](double x) { return std::exp(x); },
                  [](double, double y) { return y; });
}

Tensor log_op(const Tensor& a) {
  return unary_op(a, [](double x) { return std::log(x); },
                  [](double x, double) { return 1.0 / x; });
}

Tensor sqrt_op(const Tensor& a) {
  return unary_op(a, [](double x) { return std::sqrt(x); },
                  [](double, double y) { return 0.5 / y; });
}

Tensor tanh_op(const Tensor& a) {
  return unary_op(a, [](double x) { return std::tanh(x); },
                  [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                  [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& a) {
  return unary_op(a, [](double x) { return x > 0.0 ? x : 0.0; },
                  [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor swish(const Tensor& a) {
  return unary_op(
      a, [](double x) { return x / (1.0 + std::exp(-x)); },
      [](double x, double y) {
        double s = 1.0 / (1.0 + std::exp(-x));
        return s + y * (1.0 - s);
      });
}

Tensor reduce_sum(const Tensor& a, int axis, bool keepdim) {
  axis = norm_axis(axis, a.rank(), "reduce_sum");
  const auto& sh = a.shape();
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= sh[i];
  for (int i = axis + 1; i < a.rank(); ++i) inner *= sh[i];
  const std::int64_t n = sh[axis];
  std::vector<int> osh;
  for (int i = 0; i < a.rank(); ++i) {
    if (i == axis) {
      if (keepdim) osh.push_back(1);
    } else {
      osh.push_back(sh[i]);
    }
  }
  Tensor out = Tensor::zeros(osh);
  const double* px = a.data().data();
  double* po = out.data().data();
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t k = 0; k < n; ++k)
      for (std::int64_t i = 0; i < inner; ++i)
        po[o * inner + i] += px[(o * n + k) * inner + i];
  if (tracing({&a})) {
    out.set_requires_grad(true);
    NodeP an = a.node(), on = out.node();
    Tape::current()->record([=]() {
      if (on->grad.empty()) return;
      ensure_grad(an.get());
      const double* go = on->grad.data();
      for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t k = 0; k < n; ++k)
          for (std::int64_t i = 0; i < inner; ++i)
            an->grad[(o * n + k) * inner + i] += go[o * inner + i];
    });
  } else {
    out.set_requires_grad(a.requires_grad());
  }
  return out;
}

Tensor reduce_mean(const Tensor& a, int axis, bool keepdim) {
  int ax = norm_axis(axis, a.rank(), "reduce_mean");
  return scale(reduce_sum(a, ax, keepdim), 1.0 / a.shape()[ax]);
}

Tensor sum_all(const Tensor& a) {
  Tensor flat = reshape(a, {static_cast<int>(a.numel())});
  Tensor s = reduce_sum(flat, 0, false);
  return reshape(s, {});
}

Tensor mean_all(const Tensor& a) { return scale(sum_all(a), 1.0 / a.numel()); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2)
    throw DimensionError("matmul: operands must have rank >= 2, got " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  const int M = sa[a.rank() - 2], K = sa[a.rank() - 1];
  const int Kb = sb[b.rank() - 2], N = sb[b.rank() - 1];
  if (K != Kb)
    throw DimensionError("matmul: inner dimensions disagree: " + shape_str(sa) + " x " +
                         shape_str(sb));
  std::vector<int> batch_a(sa.begin(), sa.end() - 2), batch_b(sb.begin(), sb.end() - 2);
  std::vector<int> batch;
  if (batch_a == batch_b)
    batch = batch_a;
  else if (batch_a.empty())
    batch = batch_b;
  else if (batch_b.empty())
    batch = batch_a;
  else
    throw DimensionError("matmul: batch dimensions disagree: " + shape_str(sa) + " x " +
                         shape_str(sb));
  std::int64_t nbatch = shape_numel(batch);
  std::vector<int> osh = batch;
  osh.push_back(M);
  osh.push_back(N);
  Tensor out = Tensor::zeros(osh);
  const bool a_shared = batch_a.empty() && !batch.empty();
  const bool b_shared = batch_b.empty() && !batch.empty();
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::int64_t i = 0; i < nbatch; ++i) {
    ECMap ma(pa + (a_shared ? 0 : i * (std::int64_t)M * K), M, K);
    ECMap mb(pb + (b_shared ? 0 : i * (std::int64_t)K * N), K, N);
    EMap mo(po + i * (std::int64_t)M * N, M, N);
    mo.noalias() = ma * mb;
  }
  if (tracing({&a, &b})) {
    out.set_requires_grad(true);
    NodeP an = a.node(), bn = b.node(), on = out.node();
    bool ga = a.requires_grad(), gb = b.requires_grad();
    Tape::current()->record([=]() {
      if (on->grad.empty()) return;
      if (ga) ensure_grad(an.get());
      if (gb) ensure_grad(bn.get());
      const double* gpo = on->grad.data();
      for (std::int64_t i = 0; i < nbatch; ++i) {
        ECMap ma(an->value.data() + (a_shared ? 0 : i * (std::int64_t)M * K), M, K);
        ECMap mb(bn->value.data() + (b_shared ? 0 : i * (std::int64_t)K * N), K, N);
        ECMap mgo(gpo + i * (std::int64_t)M * N, M, N);
        if (ga) {
          EMap mga(an->grad.data() + (a_shared ? 0 : i * (std::int64_t)M * K), M, K);
          mga.noalias() += mgo * mb.transpose();
        }
        if (gb) {
          EMap mgb(bn->grad.data() + (b_shared ? 0 : i * (std::int64_t)K * N), K, N);
          mgb.noalias() += ma.transpose() * mgo;
        }
      }
    });
  } else {
    out.set_requires_grad(a.requires_grad() || b.requires_grad());
  }
  return out;
}

Tensor transpose(const Tensor& a, std::vector<int> perm) {
  const int r = a.rank();
  if (static_cast<int>(perm.size()) != r)
    throw DimensionError("transpose: permutation size != rank");
  std::vector<bool> seen(r, false);
  for (int p : perm) {
    if (p < 0 || p >= r || seen[p]) throw DimensionError("transpose: invalid permutation");
    seen[p] = true;
  }
  std::vector<int> osh(r);
  for (int i = 0; i < r; ++i) osh[i] = a.shape()[perm[i]];
  Tensor out = Tensor::zeros(osh);
  auto in_strides = dense_strides(a.shape());
  auto out_strides = dense_strides(osh);
  // stride of output dim i in the input layout
  std::vector<std::int64_t> map_strides(r);
  for (int i = 0; i < r; ++i) map_strides[i] = in_strides[perm[i]];
  const double* px = a.data().data();
  double* po = out.data().data();
  const std::int64_t n = a.numel();
  std::vector<int> idx(r, 0);
  std::int64_t isrc = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    po[i] = px[isrc];
    for (int d = r - 1; d >= 0; --d) {
      ++idx[d];
      isrc += map_strides[d];
      if (idx[d] < osh[d]) break;
      idx[d] = 0;
      isrc -= map_strides[d] * osh[d];
    }
  }
  if (tracing({&a})) {
    out.set_requires_grad(true);
    NodeP an = a.node(), on = out.node();
    Tape::current()->record([=]() {
      if (on->grad.empty()) return;
      ensure_grad(an.get());
      const double* go = on->grad.data();
      std::vector<int> ix(r, 0);
      std::int64_t is = 0;
      const std::int64_t m = static_cast<std::int64_t>(on->value.size());
      for (std::int64_t i = 0; i < m; ++i) {
        an->grad[is] += go[i];
        for (int d = r - 1; d >= 0; --d) {
          ++ix[d];
          is += map_strides[d];
          if (ix[d] < osh[d]) break;
          ix[d] = 0;
          is -= map_strides[d] * osh[d];
        }
      }
    });
  } else {
    out.set_requires_grad(a.requires_grad());
  }
  return out;
}

Tensor transpose_last2(const Tensor& a) {
  std::vector<int> perm(a.rank());
  for (int i = 0; i < a.rank(); ++i) perm[i] = i;
  std::swap(perm[a.rank() - 1], perm[a.rank() - 2]);
  return transpose(a, perm);
}

Tensor reshape(const Tensor& a, std::vector<int> shape) {
  if (shape_numel(shape) != a.numel())
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                         shape_str(shape));
  Tensor out = Tensor::from_data(shape, a.data());
  if (tracing({&a})) {
    out.set_requires_grad(true);
    NodeP an = a.node(), on = out.node();
    Tape::current()->record([=]() {
      if (on->grad.empty()) return;
      ensure_grad(an.get());
      for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
    });
  } else {
    out.set_requires_grad(a.requires_grad());
  }
  return out;
}

Tensor slice(const Tensor& a, int axis, int start, int len) {
  axis = norm_axis(axis, a.rank(), "slice");
  const auto& sh = a.shape();
  if (start < 0 || len < 0 || start + len > sh[axis])
    throw DimensionError("slice: range [" + std::to_string(start) + "," +
                         std::to_string(start + len) + ") out of bounds for axis size " +
                         std::to_string(sh[axis]));
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= sh[i];
  for (int i = axis + 1; i < a.rank(); ++i) inner *= sh[i];
  std::vector<int> osh = sh;
  osh[axis] = len;
  Tensor out = Tensor::zeros(osh);
  const double* px = a.data().data();
  double* po = out.data().data();
  const std::int64_t n = sh[axis];
  for (std::int64_t o = 0; o < outer; ++o)
    std::memcpy(po + o * len * inner, px + (o * n + start) * inner,
                sizeof(double) * static_cast<std::size_t>(len * inner));
  if (tracing({&a})) {
    out.set_requires_grad(true);
    NodeP an = a.node(), on = out.node();
    Tape::current()->record([=]() {
      if (on->grad.empty()) return;
      ensure_grad(an.get());
      const double* go = on->grad.data();
      for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t k = 0; k < len; ++k)
          for (std::int64_t i = 0; i < inner; ++i)
            an->grad[(o * n + start + k) * inner + i] += go[(o * len + k) * inner + i];
    });
  } else {
    out.set_requires_grad(a.requires_grad());
  }
  return out;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw DimensionError("concat: empty input list");
  const int r = parts[0].rank();
  axis = norm_axis(axis, r, "concat");
  int total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != r) throw DimensionError("concat: rank mismatch");
    for (int i = 0; i < r; ++i)
      if (i != axis && p.shape()[i] != parts[0].shape()[i])
        throw DimensionError("concat: shapes " + shape_str(parts[0].shape()) + " and " +
                             shape_str(p.shape()) + " differ off-axis");
    total += p.shape()[axis];
  }
  std::vector<int> osh = parts[0].shape();
  osh[axis] = total;
  Tensor out = Tensor::zeros(osh);
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= osh[i];
  for (int i = axis + 1; i < r; ++i) inner *= osh[i];
  double* po = out.data().data();
  std::int64_t off = 0;
  for (const Tensor& p : parts) {
    const std::int64_t n = p.shape()[axis];
    const double* px = p.data().data();
    for (std::int64_t o = 0; o < outer; ++o)
      std::memcpy(po + (o * total + off) * inner, px + o * n * inner,
                  sizeof(double) * static_cast<std::size_t>(n * inner));
    off += n;
  }
  std::vector<const Tensor*> ptrs;
  for (const Tensor& p : parts) ptrs.push_back(&p);
  bool any = false;
  for (const Tensor& p : parts) any = any || p.requires_grad();
  if (any && Tape::current()) {
    out.set_requires_grad(true);
    std::vector<NodeP> ins;
    for (const Tensor& p : parts) ins.push_back(p.node());
    NodeP on = out.node();
    Tape::current()->record([=]() {
      if (on->grad.empty()) return;
      const double* go = on->grad.data();
      std::int64_t o2 = 0;
      for (const NodeP& in : ins) {
        const std::int64_t n = in->shape[static_cast<std::size_t>(axis)];
        if (in->requires_grad) {
          ensure_grad(in.get());
          for (std::int64_t o = 0; o < outer; ++o)
            for (std::int64_t k = 0; k < n; ++k)
              for (std::int64_t i = 0; i < inner; ++i)
                in->grad[(o * n + k) * inner + i] += go[(o * total + o2 + k) * inner + i];
        }
        o2 += n;
      }
    });
  } else {
    out.set_requires_grad(any);
  }
  return out;
}

namespace {

// softmax / log_softmax share slice iteration
template <class F>
void slice_apply(const std::vector<int>& sh, int axis, F&& f) {
  std::int64_t outer = 1, inner = 1;
  const int r = static_cast<int>(sh.size());
  for (int i = 0; i < axis; ++i) outer *= sh[i];
  for (int i = axis + 1; i < r; ++i) inner *= sh[i];
  const std::int64_t n = sh[axis];
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t i = 0; i < inner; ++i) f(o * n * inner + i, inner, n);
}

}  // namespace

Tensor softmax(const Tensor& a, int axis) {
  axis = norm_axis(axis, a.rank(), "softmax");
  Tensor out = Tensor::zeros(a.shape());
  const double* px = a.data().data();
  double* po = out.data().data();
  slice_apply(a.shape(), axis, [&](std::int64_t base, std::int64_t stride, std::int64_t n) {
    double mx = px[base];
    for (std::int64_t k = 1; k < n; ++k) mx = std::max(mx, px[base + k * stride]);
    double s = 0.0;
    for (std::int64_t k = 0; k < n; ++k) {
      double e = std::exp(px[base + k * stride] - mx);
      po[base + k * stride] = e;
      s += e;
    }
    for (std::int64_t k = 0; k < n; ++k) po[base + k * stride] /= s;
  });
  if (tracing({&a})) {
    out.set_requires_grad(true);
    NodeP an = a.node(), on = out.node();
    Tape::current()->record([=]() {
      if (on->grad.empty()) return;
      ensure_grad(an.get());
      const double* y = on->value.data();
      const double* go = on->grad.data();
      slice_apply(an->shape, axis, [&](std::int64_t base, std::int64_t stride, std::int64_t n) {
        double dot = 0.0;
        for (std::int64_t k = 0; k < n; ++k) dot += go[base + k * stride] * y[base + k * stride];
        for (std::int64_t k = 0; k < n; ++k)
          an->grad[base + k * stride] += y[base + k * stride] * (go[base + k * stride] - dot);
      });
    });
  } else {
    out.set_requires_grad(a.requires_grad());
  }
  return out;
}

Tensor log_softmax(const Tensor& a, int axis) {
  axis = norm_axis(axis, a.rank(), "log_softmax");
  Tensor out = Tensor::zeros(a.shape());
  const double* px = a.data().data();
  double* po = out.data().data();
  slice_apply(a.shape(), axis, [&](std::int64_t base, std::int64_t stride, std::int64_t n) {
    double mx = px[base];
    for (std::int64_t k = 1; k < n; ++k) mx = std::max(mx, px[base + k * stride]);
    double s = 0.0;
    for (std::int64_t k = 0; k < n; ++k) s += std::exp(px[base + k * stride] - mx);
    const double lse = mx + std::log(s);
    for (std::int64_t k = 0; k < n; ++k) po[base + k * stride] = px[base + k * stride] - lse;
  });
  if (tracing({&a})) {
    out.set_requires_grad(true);
    NodeP an = a.node(), on = out.node();
    Tape::current()->record([=]() {
      if (on->grad.empty()) return;
      ensure_grad(an.get());
      const double* y = on->value.data();
      const double* go = on->grad.data();
      slice_apply(an->shape, axis, [&](std::int64_t base, std::int64_t stride, std::int64_t n) {
        double s = 0.0;
        for (std::int64_t k = 0; k < n; ++k) s += go[base + k * stride];
        for (std::int64_t k = 0; k < n; ++k)
          an->grad[base + k * stride] +=
              go[base + k * stride] - std::exp(y[base + k * stride]) * s;
      });
    });
  } else {
    out.set_requires_grad(a.requires_grad());
  }
  return out;
}

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids) {
  if (table.rank() != 2)
    throw DimensionError("embedding_lookup: table must be [V,D], got " +
                         shape_str(table.shape()));
  const int V = table.shape()[0], D = table.shape()[1];
  for (int id : ids)
    if (id < 0 || id >= V)
      throw DimensionError("embedding_lookup: id " + std::to_string(id) +
                           " out of range for vocab " + std::to_string(V));
  Tensor out = Tensor::zeros({static_cast<int>(ids.size()), D});
  const double* pt = table.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::memcpy(po + i * D, pt + static_cast<std::size_t>(ids[i]) * D, sizeof(double) * D);
  if (tracing({&table})) {
    out.set_requires_grad(true);
    NodeP tn = table.node(), on = out.node();
    std::vector<int> idcopy = ids;
    Tape::current()->record([=]() {
      if (on->grad.empty()) return;
      ensure_grad(tn.get());
      const double* go = on->grad.data();
      for (std::size_t i = 0; i < idcopy.size(); ++i)
        for (int d = 0; d < D; ++d)
          tn->grad[static_cast<std::size_t>(idcopy[i]) * D + d] += go[i * D + d];
    });
  } else {
    out.set_requires_grad(table.requires_grad());
  }
  return out;
}

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  if (x.rank() != 3 || w.rank() != 3 || b.rank() != 1)
    throw DimensionError("conv1d: expected x[B,T,Ci], w[Co,Ci,K], b[Co]");
  const int B = x.shape()[0], T = x.shape()[1], Ci = x.shape()[2];
  const int Co = w.shape()[0], K = w.shape()[2];
  if (w.shape()[1] != Ci)
    throw DimensionError("conv1d: channel mismatch " + shape_str(x.shape()) + " vs " +
                         shape_str(w.shape()));
  if (b.shape()[0] != Co) throw DimensionError("conv1d: bias size mismatch");
  const int To = (T + 2 * pad - K) / stride + 1;
  if (To <= 0) throw DimensionError("conv1d: sequence too short for kernel");
  Tensor out = Tensor::zeros({B, To, Co});
  const double* px = x.data().data();
  const double* pw = w.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (int n = 0; n < B; ++n)
    for (int t = 0; t < To; ++t)
      for (int co = 0; co < Co; ++co) {
        double acc = pb[co];
        for (int k = 0; k < K; ++k) {
          const int ti = t * stride + k - pad;
          if (ti < 0 || ti >= T) continue;
          const double* xr = px + ((std::int64_t)n * T + ti) * Ci;
          const double* wr = pw + ((std::int64_t)co * Ci) * K + k;
          for (int ci = 0; ci < Ci; ++ci) acc += xr[ci] * wr[(std::int64_t)ci * K];
        }
        po[((std::int64_t)n * To + t) * Co + co] = acc;
      }
  if (tracing({&x, &w, &b})) {
    out.set_requires_grad(true);
    NodeP xn = x.node(), wn = w.node(), bn = b.node(), on = out.node();
    bool gx = x.requires_grad(), gw = w.requires_grad(), gb = b.requires_grad();
    Tape::current()->record([=]() {
      if (on->grad.empty()) return;
      if (gx) ensure_grad(xn.get());
      if (gw) ensure_grad(wn.get());
      if (gb) ensure_grad(bn.get());
      const double* go = on->grad.data();
      for (int n = 0; n < B; ++n)
        for (int t = 0; t < To; ++t)
          for (int co = 0; co < Co; ++co) {
            const double g = go[((std::int64_t)n * To + t) * Co + co];
            if (gb) bn->grad[co] += g;
            for (int k = 0; k < K; ++k) {
              const int ti = t * stride + k - pad;
              if (ti < 0 || ti >= T) continue;
              for (int ci = 0; ci < Ci; ++ci) {
                const std::int64_t xi = ((std::int64_t)n * T + ti) * Ci + ci;
                const std::int64_t wi = ((std::int64_t)co * Ci + ci) * K + k;
                if (gx) xn->grad[xi] += g * wn->value[wi];
                if (gw) wn->grad[wi] += g * xn->value[xi];
              }
            }
          }
    });
  } else {
    out.set_requires_grad(x.requires_grad() || w.requires_grad() || b.requires_grad());
  }
  return out;
}

Tensor depthwise_conv1d(const Tensor& x, const Tensor& w) {
  if (x.rank() != 3 || w.rank() != 2)
    throw DimensionError("depthwise_conv1d: expected x[B,T,D], w[D,K]");
  const int B = x.shape()[0], T = x.shape()[1], D = x.shape()[2];
  const int K = w.shape()[1];
  if (w.shape()[0] != D) throw DimensionError("depthwise_conv1d: channel mismatch");
  const int pad = K / 2;
  Tensor out = Tensor::zeros({B, T, D});
  const double* px = x.data().data();
  const double* pw = w.data().data();
  double* po = out.data().data();
  for (int n = 0; n < B; ++n)
    for (int t = 0; t < T; ++t)
      for (int d = 0; d < D; ++d) {
        double acc = 0.0;
        for (int k = 0; k < K; ++k) {
          const int ti = t + k - pad;
          if (ti < 0 || ti >= T) continue;
          acc += px[((std::int64_t)n * T + ti) * D + d] * pw[(std::int64_t)d * K + k];
        }
        po[((std::int64_t)n * T + t) * D + d] = acc;
      }
  if (tracing({&x, &w})) {
    out.set_requires_grad(true);
    NodeP xn = x.node(), wn = w.node(), on = out.node();
    bool gx = x.requires_grad(), gw = w.requires_grad();
    Tape::current()->record([=]() {
      if (on->grad.empty()) return;
      if (gx) ensure_grad(xn.get());
      if (gw) ensure_grad(wn.get());
      const double* go = on->grad.data();
      for (int n = 0; n < B; ++n)
        for (int t = 0; t < T; ++t)
          for (int d = 0; d < D; ++d) {
            const double g = go[((std::int64_t)n * T + t) * D + d];
            for (int k = 0; k < K; ++k) {
              const int ti = t + k - pad;
              if (ti < 0 || ti >= T) continue;
              const std::int64_t xi = ((std::int64_t)n * T + ti) * D + d;
              const std::int64_t wi = (std::int64_t)d * K + k;
              if (gx) xn->grad[xi] += g * wn->value[wi];
              if (gw) wn->grad[wi] += g * xn->value[xi];
            }
          }
    });
  } else {
    out.set_requires_grad(x.requires_grad() || w.requires_grad());
  }
  return out;
}

Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 5 || w.rank() != 5 || b.rank() != 1)
    throw DimensionError("conv3d: expected x[B,T,H,W,Ci], w[Co,Ci,Kt,Kh,Kw], b[Co]");
  const int B = x.shape()[0], T = x.shape()[1], H = x.shape()[2], W = x.shape()[3],
            Ci = x.shape()[4];
  const int Co = w.shape()[0], Kt = w.shape()[2], Kh = w.shape()[3], Kw = w.shape()[4];
  if (w.shape()[1] != Ci)
    throw DimensionError("conv3d: channel mismatch " + shape_str(x.shape()) + " vs " +
                         shape_str(w.shape()));
  if (b.shape()[0] != Co) throw DimensionError("conv3d: bias size mismatch");
  const int pt = Kt / 2, ph = Kh / 2, pw_ = Kw / 2;
  Tensor out = Tensor::zeros({B, T, H, W, Co});
  const double* px = x.data().data();
  const double* pwv = w.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  // im2col: one row per output position, columns ordered (ci, kt, kh, kw) to
  // match the kernel layout, so the conv becomes cols * w^T.
  const std::int64_t n_rows = (std::int64_t)B * T * H * W;
  const std::int64_t n_k = (std::int64_t)Ci * Kt * Kh * Kw;
  auto cols = std::make_shared<std::vector<double>>(n_rows * n_k, 0.0);
  {
    double* pc = cols->data();
    for (int n = 0; n < B; ++n)
      for (int t = 0; t < T; ++t)
        for (int h = 0; h < H; ++h)
          for (int ww = 0; ww < W; ++ww) {
            double* row = pc + ((((std::int64_t)n * T + t) * H + h) * W + ww) * n_k;
            for (int ci = 0; ci < Ci; ++ci)
              for (int kt = 0; kt < Kt; ++kt) {
                const int ti = t + kt - pt;
                if (ti < 0 || ti >= T) continue;
                for (int kh = 0; kh < Kh; ++kh) {
                  const int hi = h + kh - ph;
                  if (hi < 0 || hi >= H) continue;
                  const double* src =
                      px + ((((std::int64_t)n * T + ti) * H + hi) * W) * Ci + ci;
                  double* dst = row + ((ci * Kt + kt) * Kh + kh) * Kw;
                  for (int kw = 0; kw < Kw; ++kw) {
                    const int wi = ww + kw - pw_;
                    if (wi >= 0 && wi < W) dst[kw] = src[(std::int64_t)wi * Ci];
                  }
                }
              }
          }
  }
  {
    ECMap mc(cols->data(), n_rows, n_k);
    ECMap mw(pwv, Co, n_k);  // w is contiguous as [Co][ci,kt,kh,kw]
    EMap mo(po, n_rows, Co);
    mo.noalias() = mc * mw.transpose();
    for (std::int64_t r = 0; r < n_rows; ++r)
      for (int co = 0; co < Co; ++co) mo(r, co) += pb[co];
  }
  if (tracing({&x, &w, &b})) {
    out.set_requires_grad(true);
    NodeP xn = x.node(), wn = w.node(), bn = b.node(), on = out.node();
    bool gx = x.requires_grad(), gw = w.requires_grad(), gb = b.requires_grad();
    Tape::current()->record([=]() {
      if (on->grad.empty()) return;
      ECMap mgo(on->grad.data(), n_rows, Co);
      if (gb) {
        ensure_grad(bn.get());
        EMap mgb(bn->grad.data(), 1, Co);
        mgb.noalias() += mgo.colwise().sum();
      }
      if (gw) {
        ensure_grad(wn.get());
        ECMap mc(cols->data(), n_rows, n_k);
        EMap mgw(wn->grad.data(), Co, n_k);
        mgw.noalias() += mgo.transpose() * mc;
      }
      if (gx) {
        ensure_grad(xn.get());
        EMat gcols = mgo * ECMap(wn->value.data(), Co, n_k);  // [n_rows, n_k]
        double* gxp = xn->grad.data();
        for (int n = 0; n < B; ++n)
          for (int t = 0; t < T; ++t)
            for (int h = 0; h < H; ++h)
              for (int ww = 0; ww < W; ++ww) {
                const double* row = gcols.data() + ((((std::int64_t)n * T + t) * H + h) * W + ww) * n_k;
                for (int ci = 0; ci < Ci; ++ci)
                  for (int kt = 0; kt < Kt; ++kt) {
                    const int ti = t + kt - pt;
                    if (ti < 0 || ti >= T) continue;
                    for (int kh = 0; kh < Kh; ++kh) {
                      const int hi = h + kh - ph;
                      if (hi < 0 || hi >= H) continue;
                      double* dst = gxp + ((((std::int64_t)n * T + ti) * H + hi) * W) * Ci + ci;
                      const double* src = row + ((ci * Kt + kt) * Kh + kh) * Kw;
                      for (int kw = 0; kw < Kw; ++kw) {
                        const int wi = ww + kw - pw_;
                        if (wi >= 0 && wi < W) dst[(std::int64_t)wi * Ci] += src[kw];
                      }
                    }
                  }
              }
      }
    });
  } else {
    out.set_requires_grad(x.requires_grad() || w.requires_grad() || b.requires_grad());
  }
  return out;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double hash_uniform(std::uint64_t key, std::uint64_t index) {
  std::uint64_t h = splitmix64(key ^ splitmix64(index));
  return static_cast<double>(h >> 11) * (1.0 / 9007199254740992.0);
}

Tensor dropout(const Tensor& x, double rate, std::uint64_t key) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw ConfigError("dropout: rate must be < 1");
  const double keep = 1.0 - rate;
  auto mask = std::make_shared<std::vector<double>>(x.data().size());
  for (std::size_t i = 0; i < mask->size(); ++i)
    (*mask)[i] = hash_uniform(key, i) >= rate ? 1.0 / keep : 0.0;
  Tensor out = Tensor::zeros(x.shape());
  for (std::size_t i = 0; i < mask->size(); ++i) out.data()[i] = x.data()[i] * (*mask)[i];
  if (tracing({&x})) {
    out.set_requires_grad(true);
    NodeP xn = x.node(), on = out.node();
    Tape::current()->record([=]() {
      if (on->grad.empty()) return;
      ensure_grad(xn.get());
      for (std::size_t i = 0; i < mask->size(); ++i) xn->grad[i] += on->grad[i] * (*mask)[i];
    });
  } else {
    out.set_requires_grad(x.requires_grad());
  }
  return out;
}

}  // namespace mlca
