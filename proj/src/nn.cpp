#include "nn.hpp"

#include <cmath>

namespace mlca {

Tensor ParamStore::add_named(const std::string& name, Tensor t) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
  index_[name] = params_.size();
  params_.emplace_back(name, t);
  return t;
}

Tensor ParamStore::xavier(const std::string& name, std::vector<int> shape, int fan_in,
                          int fan_out, Rng& rng) {
  Tensor t = Tensor::zeros(shape, /*requires_grad=*/true);
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  for (double& x : t.data()) x = rng.uniform(-a, a);
  return add_named(name, t);
}

Tensor ParamStore::zeros(const std::string& name, std::vector<int> shape) {
  return add_named(name, Tensor::zeros(std::move(shape), /*requires_grad=*/true));
}

Tensor* ParamStore::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second].second;
}

std::int64_t ParamStore::count_elements() const {
  std::int64_t n = 0;
  for (const auto& [name, t] : params_) n += t.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [name, t] : params_) t.drop_grad();
}

Tensor attention_bias(int batch, int t_q, int t_k, const std::vector<int>& kv_lens,
                      bool causal) {
  Tensor bias = Tensor::zeros({batch, 1, t_q, t_k});
  double* p = bias.data().data();
  for (int b = 0; b < batch; ++b) {
    const int valid = kv_lens.empty() ? t_k : kv_lens[b];
    for (int q = 0; q < t_q; ++q)
      for (int k = 0; k < t_k; ++k) {
        const bool banned = k >= valid || (causal && k > q);
        p[((std::int64_t)b * t_q + q) * t_k + k] = banned ? -1e30 : 0.0;
      }
  }
  return bias;
}

Tensor sinusoidal_positions(int t, int d) {
  Tensor pe = Tensor::zeros({t, d});
  double* p = pe.data().data();
  for (int pos = 0; pos < t; ++pos)
    for (int i = 0; i < d; ++i) {
      const double angle = pos / std::pow(10000.0, 2.0 * (i / 2) / d);
      p[(std::int64_t)pos * d + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  return pe;
}

Linear::Linear(ParamStore& ps, const std::string& prefix, int in, int out, Rng& rng) {
  weight = ps.xavier(prefix + ".weight", {in, out}, in, out, rng);
  bias = ps.zeros(prefix + ".bias", {out});
}

Tensor Linear::forward(const Tensor& x) const {
  // flatten leading dims to a 2-D matmul
  const auto& sh = x.shape();
  const int in = sh.back();
  std::int64_t rows = x.numel() / in;
  Tensor flat = reshape(x, {static_cast<int>(rows), in});
  Tensor y = add(matmul(flat, weight), bias);
  std::vector<int> osh = sh;
  osh.back() = weight.shape()[1];
  return reshape(y, osh);
}

void Linear::zero_init() {
  for (double& v : weight.data()) v = 0.0;
  for (double& v : bias.data()) v = 0.0;
}

LayerNorm::LayerNorm(ParamStore& ps, const std::string& prefix, int d) {
  gamma = ps.zeros(prefix + ".gamma", {d});
  for (double& v : gamma.data()) v = 1.0;
  beta = ps.zeros(prefix + ".beta", {d});
}

Tensor LayerNorm::forward(const Tensor& x) const {
  Tensor mu = reduce_mean(x, -1, /*keepdim=*/true);
  Tensor centered = sub(x, mu);
  Tensor var = reduce_mean(mul(centered, centered), -1, /*keepdim=*/true);
  Tensor inv = div(Tensor::scalar(1.0), sqrt_op(add(var, Tensor::scalar(kEps))));
  return add(mul(mul(centered, inv), gamma), beta);
}

AttentionParams::AttentionParams(ParamStore& ps, const std::string& prefix, int dim_, int heads_,
                                 Rng& rng)
    : heads(heads_), dim(dim_) {
  if (dim % heads != 0)
    throw ConfigError("attention dim " + std::to_string(dim) + " not divisible by heads " +
                      std::to_string(heads));
  wq = Linear(ps, prefix + ".wq", dim, dim, rng);
  wk = Linear(ps, prefix + ".wk", dim, dim, rng);
  wv = Linear(ps, prefix + ".wv", dim, dim, rng);
  wo = Linear(ps, prefix + ".wo", dim, dim, rng);
}

FeatureSeq multi_head_attention(const FeatureSeq& q_src, const FeatureSeq& kv_src,
                                const AttentionParams& p, bool causal) {
  if (q_src.dim() != p.dim || kv_src.dim() != p.dim)
    throw DimensionError("multi_head_attention: feature dim " + std::to_string(q_src.dim()) +
                         "/" + std::to_string(kv_src.dim()) + " vs params dim " +
                         std::to_string(p.dim));
  const int B = q_src.batch(), Tq = q_src.time(), Tk = kv_src.time();
  const int H = p.heads, dk = p.dim / p.heads;
  auto split_heads = [&](const Tensor& x, int t) {
    return transpose(reshape(x, {B, t, H, dk}), {0, 2, 1, 3});  // [B,H,T,dk]
  };
  Tensor q = split_heads(p.wq.forward(q_src.values), Tq);
  Tensor k = split_heads(p.wk.forward(kv_src.values), Tk);
  Tensor v = split_heads(p.wv.forward(kv_src.values), Tk);
  Tensor scores = scale(matmul(q, transpose_last2(k)), 1.0 / std::sqrt((double)dk));
  scores = add(scores, attention_bias(B, Tq, Tk, kv_src.lens, causal));
  Tensor w = softmax(scores, -1);
  Tensor ctx = matmul(w, v);  // [B,H,Tq,dk]
  Tensor merged = reshape(transpose(ctx, {0, 2, 1, 3}), {B, Tq, p.dim});
  return FeatureSeq{p.wo.forward(merged), q_src.lens};
}

AudioFrontend::AudioFrontend(ParamStore& ps, const std::string& prefix, int in_feats, int d,
                             Rng& rng) {
  w1 = ps.xavier(prefix + ".conv1.weight", {d, in_feats, 3}, in_feats * 3, d, rng);
  b1 = ps.zeros(prefix + ".conv1.bias", {d});
  w2 = ps.xavier(prefix + ".conv2.weight", {d, d, 3}, d * 3, d, rng);
  b2 = ps.zeros(prefix + ".conv2.bias", {d});
}

FeatureSeq AudioFrontend::forward(const Tensor& x, const std::vector<int>& lens) const {
  if (x.rank() != 3) throw DimensionError("audio_frontend: expected [B,T,F]");
  if (x.shape()[1] < 4)
    throw DimensionError("audio_frontend: sequence too short (" +
                         std::to_string(x.shape()[1]) + " raw frames, need >= 4)");
  Tensor h = swish(conv1d(x, w1, b1, /*stride=*/2, /*pad=*/1));
  h = swish(conv1d(h, w2, b2, /*stride=*/2, /*pad=*/1));
  std::vector<int> out_lens(lens.size());
  for (std::size_t i = 0; i < lens.size(); ++i)
    out_lens[i] = (lens[i] + 3) / 4;  // two ceil-div-2 stages
  return FeatureSeq{h, out_lens};
}

VideoFrontend::VideoFrontend(ParamStore& ps, const std::string& prefix,
                             std::vector<int> channels, int spatial_, int d, Rng& rng)
    : spatial(spatial_) {
  int cin = 1;
  for (std::size_t i = 0; i < channels.size(); ++i) {
    const int co = channels[i];
    const int fan_in = cin * 27;
    ws.push_back(ps.xavier(prefix + ".conv" + std::to_string(i) + ".weight", {co, cin, 3, 3, 3},
                           fan_in, co, rng));
    bs.push_back(ps.zeros(prefix + ".conv" + std::to_string(i) + ".bias", {co}));
    cin = co;
  }
  proj = Linear(ps, prefix + ".proj", cin, d, rng);
}

FeatureSeq VideoFrontend::forward(const Tensor& v, const std::vector<int>& lens) const {
  if (v.rank() != 5) throw DimensionError("video_frontend: expected [B,T,h,w,c]");
  if (v.shape()[2] != spatial || v.shape()[3] != spatial)
    throw DimensionError("video_frontend: spatial size " + std::to_string(v.shape()[2]) + "x" +
                         std::to_string(v.shape()[3]) + " does not match configured " +
                         std::to_string(spatial) + "x" + std::to_string(spatial));
  Tensor h = v;
  for (std::size_t i = 0; i < ws.size(); ++i) h = swish(conv3d(h, ws[i], bs[i]));
  // global spatial pooling: [B,T,h,w,C] -> [B,T,C]
  h = reduce_mean(reduce_mean(h, 3, false), 2, false);
  return FeatureSeq{proj.forward(h), lens};
}

BlockKind block_kind_from_string(const std::string& s) {
  if (s == "plain") return BlockKind::kPlain;
  if (s == "two_branch") return BlockKind::kTwoBranch;
  throw ConfigError("unknown encoder block kind: " + s + " (expected plain|two_branch)");
}

EncoderBlock::EncoderBlock(ParamStore& ps, const std::string& prefix, int d, int heads,
                           int ff_dim, BlockKind kind_, Rng& rng)
    : kind(kind_) {
  ln_attn = LayerNorm(ps, prefix + ".ln_attn", d);
  ln_ff = LayerNorm(ps, prefix + ".ln_ff", d);
  attn = AttentionParams(ps, prefix + ".attn", d, heads, rng);
  ff1 = Linear(ps, prefix + ".ff1", d, ff_dim, rng);
  ff2 = Linear(ps, prefix + ".ff2", ff_dim, d, rng);
  if (kind == BlockKind::kTwoBranch) {
    branch_in = Linear(ps, prefix + ".branch_in", d, d, rng);
    dw_kernel = ps.xavier(prefix + ".dw_kernel", {d, 3}, 3, 1, rng);
    merge = Linear(ps, prefix + ".merge", 2 * d, d, rng);
  }
}

FeatureSeq EncoderBlock::forward(const FeatureSeq& x, const FwdCtx& ctx) const {
  FeatureSeq normed{ln_attn.forward(x.values), x.lens};
  Tensor mixed;
  if (kind == BlockKind::kPlain) {
    mixed = multi_head_attention(normed, normed, attn).values;
  } else {
    Tensor a = multi_head_attention(normed, normed, attn).values;
    Tensor u = branch_in.forward(normed.values);
    Tensor g = sigmoid(depthwise_conv1d(u, dw_kernel));
    Tensor b = mul(u, g);
    mixed = merge.forward(concat({a, b}, -1));
  }
  Tensor h = add(x.values, ctx.drop(mixed));
  Tensor ff = ff2.forward(ctx.drop(swish(ff1.forward(ln_ff.forward(h)))));
  return FeatureSeq{add(h, ctx.drop(ff)), x.lens};
}

void EncoderBlock::zero_final_projections() {
  if (kind == BlockKind::kPlain)
    attn.wo.zero_init();
  else
    merge.zero_init();
  ff2.zero_init();
}

DecoderBlock::DecoderBlock(ParamStore& ps, const std::string& prefix, int d, int heads,
                           int ff_dim, Rng& rng) {
  ln_self = LayerNorm(ps, prefix + ".ln_self", d);
  ln_cross = LayerNorm(ps, prefix + ".ln_cross", d);
  ln_ff = LayerNorm(ps, prefix + ".ln_ff", d);
  self_attn = AttentionParams(ps, prefix + ".self_attn", d, heads, rng);
  cross_attn = AttentionParams(ps, prefix + ".cross_attn", d, heads, rng);
  ff1 = Linear(ps, prefix + ".ff1", d, ff_dim, rng);
  ff2 = Linear(ps, prefix + ".ff2", ff_dim, d, rng);
}

FeatureSeq DecoderBlock::forward(const FeatureSeq& y, const FeatureSeq& memory,
                                 const FwdCtx& ctx) const {
  FeatureSeq n1{ln_self.forward(y.values), y.lens};
  Tensor h = add(y.values, ctx.drop(multi_head_attention(n1, n1, self_attn, /*causal=*/true).values));
  FeatureSeq n2{ln_cross.forward(h), y.lens};
  h = add(h, ctx.drop(multi_head_attention(n2, memory, cross_attn).values));
  Tensor ff = ff2.forward(ctx.drop(swish(ff1.forward(ln_ff.forward(h)))));
  return FeatureSeq{add(h, ctx.drop(ff)), y.lens};
}

TransformerDecoder::TransformerDecoder(ParamStore& ps, const std::string& prefix, int vocab_,
                                       int d_, int heads, int ff_dim, int layers, Rng& rng)
    : vocab(vocab_), d(d_) {
  embedding = ps.xavier(prefix + ".embedding", {vocab, d}, vocab, d, rng);
  for (int i = 0; i < layers; ++i)
    blocks.emplace_back(ps, prefix + ".layer" + std::to_string(i), d, heads, ff_dim, rng);
  ln_out = LayerNorm(ps, prefix + ".ln_out", d);
  out_proj = Linear(ps, prefix + ".out_proj", d, vocab, rng);
}

Tensor TransformerDecoder::forward(const std::vector<std::vector<int>>& tokens,
                                   const FeatureSeq& memory, const FwdCtx& ctx) const {
  const int B = static_cast<int>(tokens.size());
  if (B == 0) throw DimensionError("transformer_decoder: empty batch");
  const int L = static_cast<int>(tokens[0].size());
  if (L == 0) throw DimensionError("transformer_decoder: empty target sequence");
  std::vector<int> flat;
  flat.reserve((std::size_t)B * L);
  for (const auto& row : tokens) {
    if (static_cast<int>(row.size()) != L)
      throw DimensionError("transformer_decoder: ragged token batch");
    flat.insert(flat.end(), row.begin(), row.end());
  }
  Tensor emb = reshape(embedding_lookup(embedding, flat), {B, L, d});
  Tensor h = add(scale(emb, std::sqrt((double)d)), sinusoidal_positions(L, d));
  FeatureSeq seq{ctx.drop(h), std::vector<int>(B, L)};
  for (const auto& blk : blocks) seq = blk.forward(seq, memory, ctx);
  return out_proj.forward(ln_out.forward(seq.values));
}

}  // namespace mlca
