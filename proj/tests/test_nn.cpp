#include <doctest.h>

#include <cmath>

#include "error.hpp"
#include "nn.hpp"
#include "rng.hpp"

using namespace mlca;

namespace {

Tensor rand_t(Rng& rng, std::vector<int> shape) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& x : t.data()) x = rng.uniform(-1.5, 1.5);
  return t;
}

// Scalar-loop attention, one (batch, head) pair at a time. No tensors, no
// shared code with the implementation under test.
std::vector<double> attention_ref(const std::vector<double>& x_q,
                                  const std::vector<double>& x_kv, int tq, int tk, int d,
                                  int heads, const AttentionParams& p, int kv_len, bool causal) {
  const int dk = d / heads;
  auto lin = [&](const std::vector<double>& x, int rows, const Tensor& w, const Tensor& b) {
    std::vector<double> y(static_cast<std::size_t>(rows) * d, 0.0);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < d; ++c) {
        double acc = b.data()[c];
        for (int k = 0; k < d; ++k) acc += x[r * d + k] * w.data()[k * d + c];
        y[r * d + c] = acc;
      }
    return y;
  };
  const auto q = lin(x_q, tq, p.wq.weight, p.wq.bias);
  const auto k = lin(x_kv, tk, p.wk.weight, p.wk.bias);
  const auto v = lin(x_kv, tk, p.wv.weight, p.wv.bias);
  std::vector<double> mixed(static_cast<std::size_t>(tq) * d, 0.0);
  for (int h = 0; h < heads; ++h)
    for (int i = 0; i < tq; ++i) {
      std::vector<double> logits(tk, -std::numeric_limits<double>::infinity());
      double mx = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < tk; ++j) {
        if (j >= kv_len) continue;
        if (causal && j > i) continue;
        double dot = 0;
        for (int c = 0; c < dk; ++c) dot += q[i * d + h * dk + c] * k[j * d + h * dk + c];
        logits[j] = dot / std::sqrt(double(dk));
        mx = std::max(mx, logits[j]);
      }
      double z = 0;
      std::vector<double> w(tk, 0.0);
      for (int j = 0; j < tk; ++j)
        if (std::isfinite(logits[j])) {
          w[j] = std::exp(logits[j] - mx);
          z += w[j];
        }
      for (int j = 0; j < tk; ++j)
        for (int c = 0; c < dk; ++c) mixed[i * d + h * dk + c] += (w[j] / z) * v[j * d + h * dk + c];
    }
  return lin(mixed, tq, p.wo.weight, p.wo.bias);
}

}  // namespace

TEST_CASE("multi-head attention matches the scalar-loop reference") {
  Rng rng(21);
  ParamStore ps;
  Rng init(5);
  const int d = 8, heads = 2, B = 2, tq = 3, tk = 4;
  AttentionParams p(ps, "a", d, heads, init);
  FeatureSeq q{rand_t(rng, {B, tq, d}), {3, 2}};
  FeatureSeq kv{rand_t(rng, {B, tk, d}), {4, 2}};
  for (bool causal : {false, true}) {
    FeatureSeq out = multi_head_attention(q, causal ? q : kv, p, causal);
    for (int b = 0; b < B; ++b) {
      const int t_keys = causal ? tq : tk;
      std::vector<double> xq(q.values.data().begin() + b * tq * d,
                             q.values.data().begin() + (b + 1) * tq * d);
      std::vector<double> xkv;
      if (causal)
        xkv = xq;
      else
        xkv.assign(kv.values.data().begin() + b * tk * d,
                   kv.values.data().begin() + (b + 1) * tk * d);
      const int kv_len = causal ? q.lens[b] : kv.lens[b];
      const auto ref = attention_ref(xq, xkv, tq, t_keys, d, heads, p, kv_len, causal);
      for (int i = 0; i < q.lens[b]; ++i)  // padded query rows are don't-care
        for (int c = 0; c < d; ++c)
          CHECK(out.values.data()[(b * tq + i) * d + c] ==
                doctest::Approx(ref[i * d + c]).epsilon(1e-10));
    }
  }
}

TEST_CASE("attention ignores padded key positions") {
  Rng rng(22);
  ParamStore ps;
  Rng init(5);
  AttentionParams p(ps, "a", 8, 2, init);
  FeatureSeq q{rand_t(rng, {1, 2, 8}), {2}};
  FeatureSeq kv{rand_t(rng, {1, 4, 8}), {2}};
  FeatureSeq out1 = multi_head_attention(q, kv, p);
  // scribble on the padded keys; output over valid queries must not move
  FeatureSeq kv2 = kv;
  kv2.values = Tensor::from_data({1, 4, 8}, kv.values.data());
  for (int j = 2; j < 4; ++j)
    for (int c = 0; c < 8; ++c) kv2.values.data()[j * 8 + c] = 1e6;
  FeatureSeq out2 = multi_head_attention(q, kv2, p);
  for (std::size_t i = 0; i < out1.values.data().size(); ++i)
    CHECK(out1.values.data()[i] == doctest::Approx(out2.values.data()[i]).epsilon(1e-10));
}

TEST_CASE("layer norm output has zero mean and unit variance per row") {
  Rng rng(23);
  ParamStore ps;
  LayerNorm ln(ps, "ln", 16);
  Tensor x = rand_t(rng, {3, 5, 16});
  Tensor y = ln.forward(x);
  for (int r = 0; r < 15; ++r) {
    double mean = 0, var = 0;
    for (int c = 0; c < 16; ++c) mean += y.data()[r * 16 + c];
    mean /= 16;
    for (int c = 0; c < 16; ++c) var += std::pow(y.data()[r * 16 + c] - mean, 2);
    var /= 16;
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(std::abs(var - 1.0) < 1e-3);  // eps in the denominator
  }
}

TEST_CASE("audio frontend downsamples time by four with ceil on lengths") {
  ParamStore ps;
  Rng init(3);
  AudioFrontend fe(ps, "af", 8, 16, init);
  Rng rng(24);
  Tensor x = rand_t(rng, {2, 16, 8});
  FeatureSeq out = fe.forward(x, {16, 9});
  CHECK(out.values.shape() == std::vector<int>{2, 4, 16});
  CHECK(out.lens == std::vector<int>{4, 3});
  CHECK_THROWS_AS(fe.forward(rand_t(rng, {1, 3, 8}), {3}), DimensionError);
}

TEST_CASE("video frontend keeps one feature per input frame") {
  ParamStore ps;
  Rng init(3);
  VideoFrontend fe(ps, "vf", {4, 8}, 8, 16, init);
  Rng rng(25);
  Tensor v = rand_t(rng, {2, 5, 8, 8, 1});
  FeatureSeq out = fe.forward(v, {5, 2});
  CHECK(out.values.shape() == std::vector<int>{2, 5, 16});
  CHECK(out.lens == std::vector<int>{5, 2});
  CHECK_THROWS_AS(fe.forward(rand_t(rng, {1, 2, 4, 4, 1}), {2}), DimensionError);
}

TEST_CASE("encoder blocks preserve shape and lens for both kinds") {
  Rng rng(26);
  for (BlockKind kind : {BlockKind::kPlain, BlockKind::kTwoBranch}) {
    ParamStore ps;
    Rng init(4);
    EncoderBlock blk(ps, "e", 8, 2, 16, kind, init);
    FeatureSeq x{rand_t(rng, {2, 5, 8}), {5, 3}};
    FwdCtx ctx;
    FeatureSeq y = blk.forward(x, ctx);
    CHECK(y.values.shape() == x.values.shape());
    CHECK(y.lens == x.lens);
  }
}

TEST_CASE("zeroed final projections make an encoder block the identity") {
  Rng rng(27);
  ParamStore ps;
  Rng init(4);
  EncoderBlock blk(ps, "e", 8, 2, 16, BlockKind::kTwoBranch, init);
  blk.zero_final_projections();
  FeatureSeq x{rand_t(rng, {2, 4, 8}), {4, 4}};
  FwdCtx ctx;
  FeatureSeq y = blk.forward(x, ctx);
  for (std::size_t i = 0; i < x.values.data().size(); ++i)
    CHECK(y.values.data()[i] == doctest::Approx(x.values.data()[i]).epsilon(1e-12));
}

TEST_CASE("dropout context produces distinct masks per call but repeats per key") {
  FwdCtx a;
  a.training = true;
  a.dropout_rate = 0.5;
  a.key = 77;
  Tensor x = Tensor::full({64}, 1.0);
  Tensor m1 = a.drop(x);
  Tensor m2 = a.drop(x);
  CHECK(m1.data() != m2.data());  // counter advanced
  FwdCtx b;
  b.training = true;
  b.dropout_rate = 0.5;
  b.key = 77;
  CHECK(b.drop(x).data() == m1.data());  // same key, same counter position
}

TEST_CASE("sinusoidal positions are bounded and time-distinct") {
  Tensor pe = sinusoidal_positions(10, 16);
  CHECK(pe.shape() == std::vector<int>{10, 16});
  for (double v : pe.data()) CHECK(std::abs(v) <= 1.0 + 1e-12);
  bool differs = false;
  for (int c = 0; c < 16 && !differs; ++c)
    differs = pe.data()[0 * 16 + c] != pe.data()[5 * 16 + c];
  CHECK(differs);
}

TEST_CASE("param store registers unique names and counts elements") {
  ParamStore ps;
  Rng init(1);
  Linear l(ps, "lin", 4, 3, init);
  CHECK(ps.count_elements() == 4 * 3 + 3);
  CHECK(ps.find("lin.weight") != nullptr);
  CHECK(ps.find("nope") == nullptr);
  CHECK_THROWS(Linear(ps, "lin", 4, 3, init));  // duplicate prefix
}
