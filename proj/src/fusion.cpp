#include "fusion.hpp"

namespace mlca {

FusionKind fusion_kind_from_string(const std::string& s) {
  if (s == "mlca") return FusionKind::kMlca;
  if (s == "add") return FusionKind::kAdd;
  if (s == "mlp") return FusionKind::kMlp;
  if (s == "none") return FusionKind::kNone;
  throw ConfigError("unknown fusion kind: " + s + " (expected mlca|add|mlp|none)");
}

std::string to_string(FusionKind k) {
  switch (k) {
    case FusionKind::kMlca: return "mlca";
    case FusionKind::kAdd: return "add";
    case FusionKind::kMlp: return "mlp";
    case FusionKind::kNone: return "none";
  }
  return "?";
}

CrossAttentionModule::CrossAttentionModule(ParamStore& ps, const std::string& prefix, int d,
                                           int heads, Rng& rng) {
  audio_mhsa = AttentionParams(ps, prefix + ".audio_mhsa", d, heads, rng);
  visual_mhsa = AttentionParams(ps, prefix + ".visual_mhsa", d, heads, rng);
  amma = AttentionParams(ps, prefix + ".amma", d, heads, rng);
  vmma = AttentionParams(ps, prefix + ".vmma", d, heads, rng);
  // Residual-branch zero init: the module starts as an exact no-op (fusion
  // degenerates to a stream sum) and the attention pathways grow in as their
  // output projections receive gradient. Markedly stabilizes early training
  // of the stacked-fusion models.
  zero_output_projections();
}

void CrossAttentionModule::zero_output_projections() {
  audio_mhsa.wo.zero_init();
  visual_mhsa.wo.zero_init();
  amma.wo.zero_init();
  vmma.wo.zero_init();
}

namespace {

void check_fusable(const FeatureSeq& h_a, const FeatureSeq& h_v, const char* what) {
  if (h_a.batch() != h_v.batch() || h_a.dim() != h_v.dim())
    throw DimensionError(std::string(what) + ": audio " + shape_str(h_a.values.shape()) +
                         " and video " + shape_str(h_v.values.shape()) + " disagree");
  if (h_a.time() != h_v.time() || h_a.lens != h_v.lens) {
    std::string la, lv;
    for (int x : h_a.lens) la += (la.empty() ? "" : ",") + std::to_string(x);
    for (int x : h_v.lens) lv += (lv.empty() ? "" : ",") + std::to_string(x);
    throw FusionLengthError(std::string(what) + ": audio frames " + std::to_string(h_a.time()) +
                            " (lens " + la + ") vs video " + std::to_string(h_v.time()) +
                            " (lens " + lv + "); equal post-frontend lengths are required");
  }
}

}  // namespace

CaOut improved_cross_attention(const FeatureSeq& h_a, const FeatureSeq& h_v,
                               const CrossAttentionModule& m) {
  check_fusable(h_a, h_v, "improved_cross_attention");
  FeatureSeq ta{add(h_a.values, multi_head_attention(h_a, h_a, m.audio_mhsa).values), h_a.lens};
  FeatureSeq tv{add(h_v.values, multi_head_attention(h_v, h_v, m.visual_mhsa).values), h_v.lens};
  // queries from the intermediate representations, keys/values from the raw inputs
  Tensor a_prime = add(ta.values, multi_head_attention(ta, h_v, m.amma).values);
  Tensor v_prime = add(tv.values, multi_head_attention(tv, h_a, m.vmma).values);
  CaOut out;
  out.h_a_prime = FeatureSeq{a_prime, h_a.lens};
  out.h_v_prime = FeatureSeq{v_prime, h_v.lens};
  out.h_av = FeatureSeq{add(a_prime, v_prime), h_a.lens};
  return out;
}

void MlcaConfig::validate() const {
  if (n_ea < 1 || n_ev < 1)
    throw ConfigError("encoder layer counts must be >= 1 (got n_ea=" + std::to_string(n_ea) +
                      ", n_ev=" + std::to_string(n_ev) + ")");
  if (kind == FusionKind::kMlca && !ca_enabled[2])
    throw ConfigError("CA3 cannot be disabled with mlca fusion: the final module defines h_av");
}

FusionOutput mlca_forward(const FeatureSeq& x_a, const FeatureSeq& x_v, const MlcaConfig& cfg,
                          const std::vector<EncoderBlock>& audio_layers,
                          const std::vector<EncoderBlock>& visual_layers,
                          const std::array<std::optional<CrossAttentionModule>, 3>& modules,
                          const FwdCtx& ctx) {
  cfg.validate();
  if (static_cast<int>(audio_layers.size()) != cfg.n_ea ||
      static_cast<int>(visual_layers.size()) != cfg.n_ev)
    throw ConfigError("mlca_forward: encoder stacks do not match configured depths");
  FusionOutput out;
  FeatureSeq ha = x_a, hv = x_v;
  int la = 0, lv = 0;
  Tensor h_av_sum;
  for (int i = 1; i <= 3; ++i) {
    const int da = cfg.audio_depth(i), dv = cfg.visual_depth(i);
    for (; la < da; ++la) ha = audio_layers[la].forward(ha, ctx);
    for (; lv < dv; ++lv) hv = visual_layers[lv].forward(hv, ctx);
    if (!cfg.ca_enabled[i - 1]) continue;
    if (!modules[i - 1])
      throw ConfigError("mlca_forward: CA" + std::to_string(i) + " enabled but not built");
    CaOut rec = improved_cross_attention(ha, hv, *modules[i - 1]);
    ha = rec.h_a_prime;
    hv = rec.h_v_prime;
    h_av_sum = h_av_sum.defined() ? add(h_av_sum, rec.h_av.values) : rec.h_av.values;
    out.module_index.push_back(i);
    out.records.push_back(std::move(rec));
  }
  out.audio_final = ha;
  out.visual_final = hv;
  out.h_av = FeatureSeq{h_av_sum, ha.lens};
  return out;
}

FeatureSeq add_fusion(const FeatureSeq& h_a, const FeatureSeq& h_v) {
  check_fusable(h_a, h_v, "add_fusion");
  return FeatureSeq{add(h_a.values, h_v.values), h_a.lens};
}

MlpFusion::MlpFusion(ParamStore& ps, const std::string& prefix, int d, int hidden, Rng& rng) {
  l1 = Linear(ps, prefix + ".l1", 2 * d, hidden, rng);
  l2 = Linear(ps, prefix + ".l2", hidden, d, rng);
}

FeatureSeq mlp_fusion(const FeatureSeq& h_a, const FeatureSeq& h_v, const MlpFusion& p) {
  check_fusable(h_a, h_v, "mlp_fusion");
  Tensor cat = concat({h_a.values, h_v.values}, -1);
  return FeatureSeq{p.l2.forward(swish(p.l1.forward(cat))), h_a.lens};
}

}  // namespace mlca
