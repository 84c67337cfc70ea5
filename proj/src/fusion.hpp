#ifndef MLCA_FUSION_HPP
#define MLCA_FUSION_HPP

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "nn.hpp"

namespace mlca {

enum class FusionKind { kMlca, kAdd, kMlp, kNone };

FusionKind fusion_kind_from_string(const std::string& s);
std::string to_string(FusionKind k);

// One cross-attention fusion module: per-modality self-attention followed by
// two modal-attention sublayers (audio queries video and vice versa), all
// residual, no layer norm.
struct CrossAttentionModule {
  AttentionParams audio_mhsa, visual_mhsa, amma, vmma;

  CrossAttentionModule() = default;
  CrossAttentionModule(ParamStore& ps, const std::string& prefix, int d, int heads, Rng& rng);
  // Zeroing the four output projections makes the module a residual no-op.
  void zero_output_projections();
};

struct CaOut {
  FeatureSeq h_a_prime;
  FeatureSeq h_v_prime;
  FeatureSeq h_av;  // always h_a_prime + h_v_prime
};

// The full chain:
//   ta = h_a + MHSA(h_a);  tv = h_v + MHSA(h_v)
//   h_a' = ta + AMMA(Q(ta), K(h_v), V(h_v))
//   h_v' = tv + VMMA(Q(tv), K(h_a), V(h_a))
//   h_av = h_a' + h_v'
CaOut improved_cross_attention(const FeatureSeq& h_a, const FeatureSeq& h_v,
                               const CrossAttentionModule& m);

struct MlcaConfig {
  int n_ea = 6;
  int n_ev = 3;
  std::array<bool, 3> ca_enabled = {true, true, true};
  FusionKind kind = FusionKind::kMlca;

  void validate() const;
  // encoder depth after which module i (1-based) fuses; i=3 is the full depth
  int audio_depth(int i) const { return i == 3 ? n_ea : i * n_ea / 3; }
  int visual_depth(int i) const { return i == 3 ? n_ev : i * n_ev / 3; }
};

struct FusionOutput {
  // records for the enabled modules, in depth order
  std::vector<int> module_index;  // 1-based CA index
  std::vector<CaOut> records;
  FeatureSeq audio_final;   // audio encoder output after all layers/fusions
  FeatureSeq visual_final;  // likewise for video
  FeatureSeq h_av;          // sum of the enabled modules' h_av_i
};

// Runs both encoder stacks layer by layer, applying the enabled CA modules at
// their placement depths; fused per-modality outputs feed the next layers.
FusionOutput mlca_forward(const FeatureSeq& x_a, const FeatureSeq& x_v, const MlcaConfig& cfg,
                          const std::vector<EncoderBlock>& audio_layers,
                          const std::vector<EncoderBlock>& visual_layers,
                          const std::array<std::optional<CrossAttentionModule>, 3>& modules,
                          const FwdCtx& ctx);

FeatureSeq add_fusion(const FeatureSeq& h_a, const FeatureSeq& h_v);

struct MlpFusion {
  Linear l1, l2;
  MlpFusion() = default;
  MlpFusion(ParamStore& ps, const std::string& prefix, int d, int hidden, Rng& rng);
};

// concat on the feature axis -> hidden -> nonlinearity -> model dim
FeatureSeq mlp_fusion(const FeatureSeq& h_a, const FeatureSeq& h_v, const MlpFusion& p);

}  // namespace mlca

#endif
