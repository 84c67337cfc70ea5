#ifndef MLCA_MODEL_HPP
#define MLCA_MODEL_HPP

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "data.hpp"
#include "fusion.hpp"
#include "nn.hpp"
#include "objectives.hpp"

namespace mlca {

enum class Modality { kAvsr, kAsr, kVsr };

Modality modality_from_string(const std::string& s);
std::string to_string(Modality m);

struct ModelConfig {
  int dim = 64;
  int heads = 4;
  int n_ea = 6;
  int n_ev = 3;
  int dec_layers = 2;
  int ff_dim = 128;
  int mlp_hidden = 128;  // hidden width of the MLP fusion baseline
  BlockKind block = BlockKind::kTwoBranch;
  FusionKind fusion = FusionKind::kMlca;
  std::array<bool, 3> ca_enabled = {true, true, true};
  int vocab = 16;
  double lambda_ctc = 0.3;
  double lambda_inter = 0.5;
  double label_smoothing = 0.1;
  double dropout = 0.1;
  std::uint64_t seed = 1;
  Modality mode = Modality::kAvsr;
  int audio_feats = 8;
  int patch = 8;
  std::vector<int> video_channels = {8, 16};

  void validate() const;
  int ctc_vocab() const { return vocab + 1; }          // 0 = blank
  int dec_vocab() const { return vocab + 3; }          // 0 pad, sos, eos
  int sos() const { return vocab + 1; }
  int eos() const { return vocab + 2; }

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

class AvsrModel {
 public:
  explicit AvsrModel(ModelConfig cfg);

  ModelConfig cfg;
  ParamStore params;
  std::optional<AudioFrontend> audio_frontend;
  std::optional<VideoFrontend> video_frontend;
  std::vector<EncoderBlock> audio_enc, visual_enc;
  std::array<std::optional<CrossAttentionModule>, 3> ca;
  std::optional<MlpFusion> mlp;
  LayerNorm enc_norm;  // output norm shared by all heads and Inter-CTC taps
  Linear ctc_head;     // shared by the final and Inter-CTC losses
  TransformerDecoder decoder;

  // Runs frontends + encoders + fusion; returns the decoder memory (h_av for
  // AVSR, the single encoder output otherwise). fusion_out, when non-null,
  // receives the per-module records for Inter-CTC (AVSR/mlca only).
  FeatureSeq encode(const Batch& batch, const FwdCtx& ctx, FusionOutput* fusion_out) const;

  LossBreakdown forward_train(const Batch& batch, const FwdCtx& ctx) const;

  // pre-norm residual streams need a final norm before any head reads them
  FeatureSeq normed(FeatureSeq h) const {
    h.values = enc_norm.forward(h.values);
    return h;
  }

  std::int64_t count_params() const { return params.count_elements(); }

  FwdCtx make_ctx(bool training, std::uint64_t step) const;
};

std::int64_t count_params(const ModelConfig& cfg);

// Checkpoint container: config + step + named parameter arrays (+ optimizer
// state under adam.m/ adam.v when present).
struct Checkpoint {
  ModelConfig config;
  std::int64_t step = 0;
  std::map<std::string, std::pair<std::vector<int>, std::vector<double>>> arrays;

  static Checkpoint load(const std::string& path);
};

void save_checkpoint(const std::string& path, const AvsrModel& model, std::int64_t step,
                     const std::map<std::string, std::vector<double>>* adam_m,
                     const std::map<std::string, std::vector<double>>* adam_v);

// Restores parameters into a freshly built model; bit-exact round trip.
AvsrModel model_from_checkpoint(const Checkpoint& ckpt);

// Audio side from the ASR checkpoint, video side from the VSR checkpoint,
// fresh CA modules with zero output projections, fresh decoder unless
// copy_decoder.
AvsrModel init_from_pretrained(const ModelConfig& avsr_cfg, const Checkpoint& asr_ckpt,
                               const Checkpoint& vsr_ckpt, bool copy_decoder = false);

}  // namespace mlca

#endif
