#include "model.hpp"

#include <cmath>

#include "container.hpp"

namespace mlca {

Modality modality_from_string(const std::string& s) {
  if (s == "avsr") return Modality::kAvsr;
  if (s == "asr") return Modality::kAsr;
  if (s == "vsr") return Modality::kVsr;
  throw ConfigError("unknown mode: " + s + " (expected avsr|asr|vsr)");
}

std::string to_string(Modality m) {
  switch (m) {
    case Modality::kAvsr: return "avsr";
    case Modality::kAsr: return "asr";
    case Modality::kVsr: return "vsr";
  }
  return "?";
}

void ModelConfig::validate() const {
  if (dim % heads != 0)
    throw ConfigError("model dim " + std::to_string(dim) + " not divisible by heads " +
                      std::to_string(heads));
  if (n_ea < 1 || n_ev < 1 || dec_layers < 1)
    throw ConfigError("layer counts must be >= 1");
  if (vocab < 2) throw ConfigError("vocab must be >= 2");
  if (lambda_ctc < 0 || lambda_ctc > 1 || lambda_inter < 0 || lambda_inter > 1)
    throw ConfigError("loss weights must lie in [0,1]");
  if (mode == Modality::kAvsr && fusion == FusionKind::kNone)
    throw ConfigError("avsr mode requires a fusion kind");
  if (fusion == FusionKind::kMlca && !ca_enabled[2])
    throw ConfigError("CA3 cannot be disabled with mlca fusion");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"dim", dim},
          {"heads", heads},
          {"n_ea", n_ea},
          {"n_ev", n_ev},
          {"dec_layers", dec_layers},
          {"ff_dim", ff_dim},
          {"mlp_hidden", mlp_hidden},
          {"block", block == BlockKind::kPlain ? "plain" : "two_branch"},
          {"fusion", to_string(fusion)},
          {"ca_enabled", std::vector<int>{ca_enabled[0], ca_enabled[1], ca_enabled[2]}},
          {"vocab", vocab},
          {"lambda_ctc", lambda_ctc},
          {"lambda_inter", lambda_inter},
          {"label_smoothing", label_smoothing},
          {"dropout", dropout},
          {"seed", seed},
          {"mode", to_string(mode)},
          {"audio_feats", audio_feats},
          {"patch", patch},
          {"video_channels", video_channels}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.dim = j["dim"];
  c.heads = j["heads"];
  c.n_ea = j["n_ea"];
  c.n_ev = j["n_ev"];
  c.dec_layers = j["dec_layers"];
  c.ff_dim = j["ff_dim"];
  c.mlp_hidden = j["mlp_hidden"];
  c.block = block_kind_from_string(j["block"]);
  c.fusion = fusion_kind_from_string(j["fusion"]);
  auto cav = j["ca_enabled"].get<std::vector<int>>();
  c.ca_enabled = {cav[0] != 0, cav[1] != 0, cav[2] != 0};
  c.vocab = j["vocab"];
  c.lambda_ctc = j["lambda_ctc"];
  c.lambda_inter = j["lambda_inter"];
  c.label_smoothing = j["label_smoothing"];
  c.dropout = j["dropout"];
  c.seed = j["seed"];
  c.mode = modality_from_string(j["mode"]);
  c.audio_feats = j["audio_feats"];
  c.patch = j["patch"];
  c.video_channels = j["video_channels"].get<std::vector<int>>();
  return c;
}

AvsrModel::AvsrModel(ModelConfig cfg_) : cfg(std::move(cfg_)) {
  cfg.validate();
  Rng rng(splitmix64(cfg.seed) ^ 0x5eedULL);
  const bool has_audio = cfg.mode != Modality::kVsr;
  const bool has_video = cfg.mode != Modality::kAsr;
  if (has_audio) {
    audio_frontend.emplace(params, "audio_frontend", cfg.audio_feats, cfg.dim, rng);
    for (int i = 0; i < cfg.n_ea; ++i)
      audio_enc.emplace_back(params, "audio_enc.layer" + std::to_string(i), cfg.dim, cfg.heads,
                             cfg.ff_dim, cfg.block, rng);
  }
  if (has_video) {
    video_frontend.emplace(params, "video_frontend", cfg.video_channels, cfg.patch, cfg.dim,
                           rng);
    for (int i = 0; i < cfg.n_ev; ++i)
      visual_enc.emplace_back(params, "visual_enc.layer" + std::to_string(i), cfg.dim,
                              cfg.heads, cfg.ff_dim, cfg.block, rng);
  }
  if (cfg.mode == Modality::kAvsr) {
    if (cfg.fusion == FusionKind::kMlca) {
      for (int i = 0; i < 3; ++i)
        if (cfg.ca_enabled[i])
          ca[i].emplace(params, "ca" + std::to_string(i + 1), cfg.dim, cfg.heads, rng);
    } else if (cfg.fusion == FusionKind::kMlp) {
      mlp.emplace(params, "mlp_fusion", cfg.dim, cfg.mlp_hidden, rng);
    }
  }
  enc_norm = LayerNorm(params, "enc_norm", cfg.dim);
  ctc_head = Linear(params, "ctc_head", cfg.dim, cfg.ctc_vocab(), rng);
  decoder = TransformerDecoder(params, "decoder", cfg.dec_vocab(), cfg.dim, cfg.heads,
                               cfg.ff_dim, cfg.dec_layers, rng);
}

FwdCtx AvsrModel::make_ctx(bool training, std::uint64_t step) const {
  FwdCtx ctx;
  ctx.training = training;
  ctx.dropout_rate = cfg.dropout;
  ctx.key = splitmix64(cfg.seed ^ splitmix64(0xd20b0 + step));
  return ctx;
}

namespace {

FeatureSeq with_positions(FeatureSeq x) {
  x.values = add(x.values, sinusoidal_positions(x.time(), x.dim()));
  return x;
}

FeatureSeq run_stack(const std::vector<EncoderBlock>& layers, FeatureSeq x, const FwdCtx& ctx) {
  for (const auto& l : layers) x = l.forward(x, ctx);
  return x;
}

}  // namespace

FeatureSeq AvsrModel::encode(const Batch& batch, const FwdCtx& ctx,
                             FusionOutput* fusion_out) const {
  FeatureSeq xa, xv;
  if (audio_frontend) xa = with_positions(audio_frontend->forward(batch.audio, batch.audio_lens));
  if (video_frontend) xv = with_positions(video_frontend->forward(batch.video, batch.video_lens));
  switch (cfg.mode) {
    case Modality::kAsr:
      return run_stack(audio_enc, xa, ctx);
    case Modality::kVsr:
      return run_stack(visual_enc, xv, ctx);
    case Modality::kAvsr:
      break;
  }
  if (cfg.fusion == FusionKind::kMlca) {
    MlcaConfig mc{cfg.n_ea, cfg.n_ev, cfg.ca_enabled, FusionKind::kMlca};
    FusionOutput fo = mlca_forward(xa, xv, mc, audio_enc, visual_enc, ca, ctx);
    FeatureSeq h_av = fo.h_av;
    if (fusion_out) *fusion_out = std::move(fo);
    return h_av;
  }
  FeatureSeq ha = run_stack(audio_enc, xa, ctx);
  FeatureSeq hv = run_stack(visual_enc, xv, ctx);
  if (cfg.fusion == FusionKind::kAdd) return add_fusion(ha, hv);
  return mlp_fusion(ha, hv, *mlp);
}

LossBreakdown AvsrModel::forward_train(const Batch& batch, const FwdCtx& ctx) const {
  try {
    FusionOutput fo;
    FeatureSeq memory = normed(encode(batch, ctx, &fo));
    Tensor lp_final = log_softmax(ctc_head.forward(memory.values), -1);
    Tensor l_ctc = ctc_loss_batch(lp_final, memory.lens, batch.targets);
    std::vector<Tensor> inter;
    for (std::size_t k = 0; k < fo.module_index.size(); ++k) {
      if (fo.module_index[k] >= 3) continue;  // CA3 is the final output, not an Inter tap
      const FeatureSeq h = normed(fo.records[k].h_av);
      Tensor lp = log_softmax(ctc_head.forward(h.values), -1);
      inter.push_back(ctc_loss_batch(lp, h.lens, batch.targets));
    }
    // teacher-forced decoder: sos + target in, target + eos out (pad -1)
    const int B = static_cast<int>(batch.targets.size());
    int l_dec = 0;
    for (const auto& t : batch.targets) l_dec = std::max(l_dec, (int)t.size() + 1);
    std::vector<std::vector<int>> tok_in(B), tok_out(B);
    for (int b = 0; b < B; ++b) {
      tok_in[b].push_back(cfg.sos());
      for (int c : batch.targets[b]) tok_in[b].push_back(c);
      tok_in[b].resize(l_dec, 0);
      tok_out[b] = batch.targets[b];
      tok_out[b].push_back(cfg.eos());
      tok_out[b].resize(l_dec, -1);
    }
    Tensor logits = decoder.forward(tok_in, memory, ctx);
    Tensor l_att = label_smoothed_ce(logits, tok_out, cfg.label_smoothing);
    return joint_loss(l_att, l_ctc, inter, cfg.lambda_ctc, cfg.lambda_inter);
  } catch (const FusionLengthError& e) {
    throw FusionLengthError(std::string(e.what()) + " [utterance " + batch.ids.front() + "]");
  } catch (const InfeasibleAlignmentError& e) {
    throw InfeasibleAlignmentError(std::string(e.what()) + " [batch starting at " +
                                   batch.ids.front() + "]");
  }
}

std::int64_t count_params(const ModelConfig& cfg) { return AvsrModel(cfg).count_params(); }

void save_checkpoint(const std::string& path, const AvsrModel& model, std::int64_t step,
                     const std::map<std::string, std::vector<double>>* adam_m,
                     const std::map<std::string, std::vector<double>>* adam_v) {
  ContainerWriter cw;
  cw.set_meta({{"config", model.cfg.to_json()}, {"step", step}});
  for (const auto& [name, t] : model.params.all()) cw.add(name, t.shape(), t.data());
  if (adam_m)
    for (const auto& [name, v] : *adam_m) {
      Tensor* p = const_cast<ParamStore&>(model.params).find(name);
      cw.add("adam.m/" + name, p->shape(), v);
    }
  if (adam_v)
    for (const auto& [name, v] : *adam_v) {
      Tensor* p = const_cast<ParamStore&>(model.params).find(name);
      cw.add("adam.v/" + name, p->shape(), v);
    }
  cw.write(path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  ContainerReader cr(path);
  Checkpoint ck;
  ck.config = ModelConfig::from_json(cr.meta().at("config"));
  ck.step = cr.meta().at("step").get<std::int64_t>();
  for (const auto& name : cr.names()) ck.arrays[name] = {cr.shape(name), cr.read(name)};
  return ck;
}

AvsrModel model_from_checkpoint(const Checkpoint& ckpt) {
  AvsrModel model(ckpt.config);
  for (auto& [name, t] : model.params.all()) {
    auto it = ckpt.arrays.find(name);
    if (it == ckpt.arrays.end())
      throw ConfigError("checkpoint missing parameter: " + name);
    if (it->second.first != t.shape())
      throw ConfigError("checkpoint parameter " + name + " has shape " +
                        shape_str(it->second.first) + ", model expects " + shape_str(t.shape()));
    t.data() = it->second.second;
  }
  return model;
}

namespace {

void copy_prefixed(AvsrModel& dst, const Checkpoint& src, const std::string& prefix) {
  for (auto& [name, t] : dst.params.all()) {
    if (name.rfind(prefix, 0) != 0) continue;
    auto it = src.arrays.find(name);
    if (it == src.arrays.end())
      throw ConfigError("pretrained checkpoint missing parameter: " + name);
    if (it->second.first != t.shape())
      throw ConfigError("pretrained parameter " + name + " has shape " +
                        shape_str(it->second.first) + ", target expects " +
                        shape_str(t.shape()));
    t.data() = it->second.second;
  }
}

}  // namespace

AvsrModel init_from_pretrained(const ModelConfig& avsr_cfg, const Checkpoint& asr_ckpt,
                               const Checkpoint& vsr_ckpt, bool copy_decoder) {
  if (avsr_cfg.mode != Modality::kAvsr)
    throw ConfigError("init_from_pretrained: target config must be avsr mode");
  AvsrModel model(avsr_cfg);
  copy_prefixed(model, asr_ckpt, "audio_frontend.");
  copy_prefixed(model, asr_ckpt, "audio_enc.");
  copy_prefixed(model, vsr_ckpt, "video_frontend.");
  copy_prefixed(model, vsr_ckpt, "visual_enc.");
  if (copy_decoder) {
    copy_prefixed(model, asr_ckpt, "decoder.");
    copy_prefixed(model, asr_ckpt, "ctc_head.");
  }
  for (auto& m : model.ca)
    if (m) m->zero_output_projections();
  return model;
}

}  // namespace mlca
