#include <doctest.h>

#include <cmath>

#include "error.hpp"
#include "fusion.hpp"
#include "rng.hpp"

using namespace mlca;

namespace {

Tensor rand_t(Rng& rng, std::vector<int> shape) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& x : t.data()) x = rng.uniform(-1.5, 1.5);
  return t;
}

// y = W^T x + b for a single d-vector (Linear stores weight as [in, out])
std::vector<double> apply_linear(const Linear& l, const std::vector<double>& x) {
  const int d_in = l.weight.shape()[0], d_out = l.weight.shape()[1];
  std::vector<double> y(d_out);
  for (int o = 0; o < d_out; ++o) {
    double acc = l.bias.data()[o];
    for (int i = 0; i < d_in; ++i) acc += x[i] * l.weight.data()[i * d_out + o];
    y[o] = acc;
  }
  return y;
}

// With a single time step the softmax weight is exactly 1, so one attention
// sublayer reduces to wo(wv(kv)) regardless of wq/wk. Evaluated by hand.
std::vector<double> single_step_attention(const AttentionParams& p,
                                          const std::vector<double>& kv) {
  return apply_linear(p.wo, apply_linear(p.wv, kv));
}

std::vector<double> vec_add(std::vector<double> a, const std::vector<double>& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

// modules construct with zero output projections; fill them so the hand
// evaluations exercise every sublayer instead of the residual path only
void randomize_output_projections(CrossAttentionModule& m, Rng& rng) {
  for (Tensor* w : {&m.audio_mhsa.wo.weight, &m.visual_mhsa.wo.weight, &m.amma.wo.weight,
                    &m.vmma.wo.weight})
    for (double& x : w->data()) x = rng.uniform(-0.5, 0.5);
}

}  // namespace

TEST_CASE("single-step chain matches a hand evaluation to 1e-10") {
  const int d = 4;
  ParamStore ps;
  Rng init(31);
  CrossAttentionModule m(ps, "ca", d, 1, init);
  randomize_output_projections(m, init);
  Rng rng(32);
  FeatureSeq ha{rand_t(rng, {1, 1, d}), {1}};
  FeatureSeq hv{rand_t(rng, {1, 1, d}), {1}};
  const std::vector<double> a0 = ha.values.data();
  const std::vector<double> v0 = hv.values.data();

  // ta = ha + selfattn(ha); tv = hv + selfattn(hv)
  const auto ta = vec_add(a0, single_step_attention(m.audio_mhsa, a0));
  const auto tv = vec_add(v0, single_step_attention(m.visual_mhsa, v0));
  // the modal sublayers read keys/values from the *raw* other modality
  const auto ha_p = vec_add(ta, single_step_attention(m.amma, v0));
  const auto hv_p = vec_add(tv, single_step_attention(m.vmma, a0));
  const auto hav = vec_add(ha_p, hv_p);

  CaOut out = improved_cross_attention(ha, hv, m);
  for (int i = 0; i < d; ++i) {
    CHECK(out.h_a_prime.values.data()[i] == doctest::Approx(ha_p[i]).epsilon(1e-10));
    CHECK(out.h_v_prime.values.data()[i] == doctest::Approx(hv_p[i]).epsilon(1e-10));
    CHECK(out.h_av.values.data()[i] == doctest::Approx(hav[i]).epsilon(1e-10));
  }
}

TEST_CASE("fused output always equals the sum of the two streams") {
  Rng rng(33);
  ParamStore ps;
  Rng init(34);
  CrossAttentionModule m(ps, "ca", 8, 2, init);
  randomize_output_projections(m, init);
  for (int trial = 0; trial < 5; ++trial) {
    FeatureSeq ha{rand_t(rng, {2, 4, 8}), {4, 3}};
    FeatureSeq hv{rand_t(rng, {2, 4, 8}), {4, 3}};
    CaOut out = improved_cross_attention(ha, hv, m);
    for (std::size_t i = 0; i < out.h_av.values.data().size(); ++i)
      CHECK(out.h_av.values.data()[i] ==
            doctest::Approx(out.h_a_prime.values.data()[i] + out.h_v_prime.values.data()[i])
                .epsilon(1e-12));
  }
}

TEST_CASE("zeroed output projections make the module a residual no-op") {
  Rng rng(35);
  ParamStore ps;
  Rng init(36);
  CrossAttentionModule m(ps, "ca", 8, 2, init);
  m.zero_output_projections();
  FeatureSeq ha{rand_t(rng, {1, 3, 8}), {3}};
  FeatureSeq hv{rand_t(rng, {1, 3, 8}), {3}};
  CaOut out = improved_cross_attention(ha, hv, m);
  for (std::size_t i = 0; i < ha.values.data().size(); ++i) {
    CHECK(out.h_a_prime.values.data()[i] == ha.values.data()[i]);
    CHECK(out.h_v_prime.values.data()[i] == hv.values.data()[i]);
    CHECK(out.h_av.values.data()[i] == ha.values.data()[i] + hv.values.data()[i]);
  }
}

TEST_CASE("mismatched fused lengths are an error, not silent truncation") {
  Rng rng(37);
  ParamStore ps;
  Rng init(38);
  CrossAttentionModule m(ps, "ca", 8, 2, init);
  FeatureSeq ha{rand_t(rng, {1, 4, 8}), {4}};
  FeatureSeq hv_short{rand_t(rng, {1, 3, 8}), {3}};
  CHECK_THROWS_AS(improved_cross_attention(ha, hv_short, m), FusionLengthError);
  FeatureSeq hv_lens{rand_t(rng, {1, 4, 8}), {3}};
  CHECK_THROWS_AS(improved_cross_attention(ha, hv_lens, m), FusionLengthError);
  CHECK_THROWS_AS(add_fusion(ha, hv_short), FusionLengthError);
}

TEST_CASE("module placement depths") {
  MlcaConfig c;
  c.n_ea = 6;
  c.n_ev = 3;
  CHECK(c.audio_depth(1) == 2);
  CHECK(c.audio_depth(2) == 4);
  CHECK(c.audio_depth(3) == 6);
  CHECK(c.visual_depth(1) == 1);
  CHECK(c.visual_depth(2) == 2);
  CHECK(c.visual_depth(3) == 3);
  c.n_ea = 24;
  c.n_ev = 9;
  CHECK(c.audio_depth(1) == 8);
  CHECK(c.audio_depth(2) == 16);
  CHECK(c.visual_depth(1) == 3);
  CHECK(c.visual_depth(2) == 6);
}

TEST_CASE("mlca config validation") {
  MlcaConfig c;
  c.ca_enabled = {true, true, false};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.ca_enabled = {false, false, true};
  CHECK_NOTHROW(c.validate());
}

namespace {

std::vector<EncoderBlock> make_stack(ParamStore& ps, const std::string& prefix, int n, int d,
                                     Rng& rng) {
  std::vector<EncoderBlock> s;
  for (int i = 0; i < n; ++i)
    s.emplace_back(ps, prefix + std::to_string(i), d, 2, 12, BlockKind::kPlain, rng);
  return s;
}

FeatureSeq run_layers(const std::vector<EncoderBlock>& layers, FeatureSeq x, int from, int to,
                      const FwdCtx& ctx) {
  for (int i = from; i < to; ++i) x = layers[i].forward(x, ctx);
  return x;
}

}  // namespace

TEST_CASE("final-module-only fusion equals independent stacks plus one module") {
  const int d = 8;
  ParamStore ps;
  Rng init(39);
  auto audio = make_stack(ps, "a", 6, d, init);
  auto visual = make_stack(ps, "v", 3, d, init);
  std::array<std::optional<CrossAttentionModule>, 3> modules;
  modules[2].emplace(ps, "ca3", d, 2, init);
  randomize_output_projections(*modules[2], init);

  Rng rng(40);
  FeatureSeq xa{rand_t(rng, {2, 4, d}), {4, 3}};
  FeatureSeq xv{rand_t(rng, {2, 4, d}), {4, 3}};
  FwdCtx ctx;

  MlcaConfig mc{6, 3, {false, false, true}, FusionKind::kMlca};
  FusionOutput fo = mlca_forward(xa, xv, mc, audio, visual, modules, ctx);

  FeatureSeq ha = run_layers(audio, xa, 0, 6, ctx);
  FeatureSeq hv = run_layers(visual, xv, 0, 3, ctx);
  CaOut ref = improved_cross_attention(ha, hv, *modules[2]);
  REQUIRE(fo.records.size() == 1);
  CHECK(fo.module_index == std::vector<int>{3});
  for (std::size_t i = 0; i < ref.h_av.values.data().size(); ++i)
    CHECK(fo.h_av.values.data()[i] == doctest::Approx(ref.h_av.values.data()[i]).epsilon(1e-12));
}

TEST_CASE("full grid matches a hand-layered evaluation and sums enabled outputs") {
  const int d = 8;
  ParamStore ps;
  Rng init(41);
  auto audio = make_stack(ps, "a", 6, d, init);
  auto visual = make_stack(ps, "v", 3, d, init);
  std::array<std::optional<CrossAttentionModule>, 3> modules;
  for (int i = 0; i < 3; ++i) {
    modules[i].emplace(ps, "ca" + std::to_string(i + 1), d, 2, init);
    randomize_output_projections(*modules[i], init);
  }

  Rng rng(42);
  FeatureSeq xa{rand_t(rng, {1, 3, d}), {2}};
  FeatureSeq xv{rand_t(rng, {1, 3, d}), {2}};
  FwdCtx ctx;

  MlcaConfig mc{6, 3, {true, true, true}, FusionKind::kMlca};
  FusionOutput fo = mlca_forward(xa, xv, mc, audio, visual, modules, ctx);

  // by hand: fuse at audio depths 2/4/6 and visual 1/2/3, feeding the fused
  // per-modality streams onward
  FeatureSeq a = run_layers(audio, xa, 0, 2, ctx);
  FeatureSeq v = run_layers(visual, xv, 0, 1, ctx);
  CaOut c1 = improved_cross_attention(a, v, *modules[0]);
  a = run_layers(audio, c1.h_a_prime, 2, 4, ctx);
  v = run_layers(visual, c1.h_v_prime, 1, 2, ctx);
  CaOut c2 = improved_cross_attention(a, v, *modules[1]);
  a = run_layers(audio, c2.h_a_prime, 4, 6, ctx);
  v = run_layers(visual, c2.h_v_prime, 2, 3, ctx);
  CaOut c3 = improved_cross_attention(a, v, *modules[2]);

  REQUIRE(fo.records.size() == 3);
  CHECK(fo.module_index == std::vector<int>{1, 2, 3});
  for (std::size_t i = 0; i < fo.h_av.values.data().size(); ++i) {
    const double expect = c1.h_av.values.data()[i] + c2.h_av.values.data()[i] +
                          c3.h_av.values.data()[i];
    CHECK(fo.h_av.values.data()[i] == doctest::Approx(expect).epsilon(1e-12));
    CHECK(fo.records[2].h_av.values.data()[i] ==
          doctest::Approx(c3.h_av.values.data()[i]).epsilon(1e-12));
  }
  for (std::size_t i = 0; i < a.values.data().size(); ++i)
    CHECK(fo.audio_final.values.data()[i] ==
          doctest::Approx(c3.h_a_prime.values.data()[i]).epsilon(1e-12));
}

TEST_CASE("add and mlp fusion shapes") {
  Rng rng(43);
  FeatureSeq ha{rand_t(rng, {2, 3, 8}), {3, 2}};
  FeatureSeq hv{rand_t(rng, {2, 3, 8}), {3, 2}};
  FeatureSeq s = add_fusion(ha, hv);
  for (std::size_t i = 0; i < s.values.data().size(); ++i)
    CHECK(s.values.data()[i] == ha.values.data()[i] + hv.values.data()[i]);
  ParamStore ps;
  Rng init(44);
  MlpFusion f(ps, "m", 8, 12, init);
  FeatureSeq y = mlp_fusion(ha, hv, f);
  CHECK(y.values.shape() == std::vector<int>{2, 3, 8});
  CHECK(y.lens == ha.lens);
}

TEST_CASE("fusion kind string round trip") {
  for (FusionKind k : {FusionKind::kMlca, FusionKind::kAdd, FusionKind::kMlp, FusionKind::kNone})
    CHECK(fusion_kind_from_string(to_string(k)) == k);
  CHECK_THROWS_AS(fusion_kind_from_string("bogus"), ConfigError);
}
