#ifndef MLCA_NN_HPP
#define MLCA_NN_HPP

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "ops.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace mlca {

// Named, ordered parameter registry. Checkpoints and the optimizer walk this.
class ParamStore {
 public:
  Tensor xavier(const std::string& name, std::vector<int> shape, int fan_in, int fan_out,
                Rng& rng);
  Tensor zeros(const std::string& name, std::vector<int> shape);

  std::vector<std::pair<std::string, Tensor>>& all() { return params_; }
  const std::vector<std::pair<std::string, Tensor>>& all() const { return params_; }
  Tensor* find(const std::string& name);
  std::int64_t count_elements() const;
  void zero_grad();

 private:
  Tensor add_named(const std::string& name, Tensor t);
  std::vector<std::pair<std::string, Tensor>> params_;
  std::map<std::string, std::size_t> index_;
};

// Per-forward context: training mode, dropout rate, and a counter-based key
// stream so dropout masks are a pure function of (seed, step, call index).
struct FwdCtx {
  bool training = false;
  double dropout_rate = 0.0;
  std::uint64_t key = 0;  // derived from run seed and step
  mutable std::uint64_t counter = 0;

  Tensor drop(const Tensor& x) const {
    if (!training || dropout_rate <= 0.0) return x;
    return dropout(x, dropout_rate, splitmix64(key ^ splitmix64(++counter)));
  }
};

// Batched hidden sequence plus per-sequence valid lengths (prefix masks).
struct FeatureSeq {
  Tensor values;          // [B, T, D]
  std::vector<int> lens;  // valid frames per sequence, lens[b] <= T

  int batch() const { return values.shape()[0]; }
  int time() const { return values.shape()[1]; }
  int dim() const { return values.shape()[2]; }
};

// Additive attention mask over keys: 0 where valid, -1e30 where padded.
// Shape [B, 1, Tq, Tk]; causal additionally bans k > q.
Tensor attention_bias(int batch, int t_q, int t_k, const std::vector<int>& kv_lens, bool causal);

Tensor sinusoidal_positions(int t, int d);

class Linear {
 public:
  Linear() = default;
  Linear(ParamStore& ps, const std::string& prefix, int in, int out, Rng& rng);
  Tensor forward(const Tensor& x) const;  // x [..., in] -> [..., out]
  void zero_init();                       // weights and bias to zero
  Tensor weight, bias;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParamStore& ps, const std::string& prefix, int d);
  Tensor forward(const Tensor& x) const;  // normalizes the last axis
  Tensor gamma, beta;
  static constexpr double kEps = 1e-5;
};

struct AttentionParams {
  int heads = 0;
  int dim = 0;  // per-head dim = dim / heads
  Linear wq, wk, wv, wo;

  AttentionParams() = default;
  AttentionParams(ParamStore& ps, const std::string& prefix, int dim, int heads, Rng& rng);
};

// Softmax(Q Kt / sqrt(d_k)) V per head, heads concatenated, output-projected.
// Padded key positions receive -inf logits; output keeps q_src's mask.
FeatureSeq multi_head_attention(const FeatureSeq& q_src, const FeatureSeq& kv_src,
                                const AttentionParams& p, bool causal = false);

class AudioFrontend {
 public:
  AudioFrontend() = default;
  AudioFrontend(ParamStore& ps, const std::string& prefix, int in_feats, int d, Rng& rng);
  // x [B, T_raw, F] -> [B, ceil(T_raw/4), d]; lens downsampled with ceil.
  FeatureSeq forward(const Tensor& x, const std::vector<int>& lens) const;
  Tensor w1, b1, w2, b2;  // two strided conv stages
};

class VideoFrontend {
 public:
  VideoFrontend() = default;
  VideoFrontend(ParamStore& ps, const std::string& prefix, std::vector<int> channels,
                int spatial, int d, Rng& rng);
  // v [B, T, h, w, 1] -> [B, T, d]; mask passthrough.
  FeatureSeq forward(const Tensor& v, const std::vector<int>& lens) const;
  std::vector<Tensor> ws, bs;
  Linear proj;
  int spatial = 8;
};

enum class BlockKind { kPlain, kTwoBranch };

BlockKind block_kind_from_string(const std::string& s);

// Pre-norm encoder block. `plain` = self-attention + feed-forward.
// `two_branch` = parallel attention and gated depthwise-conv branches,
// concat-projected (the lightweight E-Branchformer stand-in), + feed-forward.
class EncoderBlock {
 public:
  EncoderBlock() = default;
  EncoderBlock(ParamStore& ps, const std::string& prefix, int d, int heads, int ff_dim,
               BlockKind kind, Rng& rng);
  FeatureSeq forward(const FeatureSeq& x, const FwdCtx& ctx) const;
  void zero_final_projections();

  BlockKind kind = BlockKind::kPlain;
  LayerNorm ln_attn, ln_ff;
  AttentionParams attn;
  Linear ff1, ff2;
  // two_branch extras
  Linear branch_in, merge;
  Tensor dw_kernel;  // [d, k]
};

class DecoderBlock {
 public:
  DecoderBlock() = default;
  DecoderBlock(ParamStore& ps, const std::string& prefix, int d, int heads, int ff_dim, Rng& rng);
  FeatureSeq forward(const FeatureSeq& y, const FeatureSeq& memory, const FwdCtx& ctx) const;
  LayerNorm ln_self, ln_cross, ln_ff;
  AttentionParams self_attn, cross_attn;
  Linear ff1, ff2;
};

class TransformerDecoder {
 public:
  TransformerDecoder() = default;
  TransformerDecoder(ParamStore& ps, const std::string& prefix, int vocab, int d, int heads,
                     int ff_dim, int layers, Rng& rng);
  // tokens [B, L] (already shifted, sos-prefixed) -> logits [B, L, vocab]
  Tensor forward(const std::vector<std::vector<int>>& tokens, const FeatureSeq& memory,
                 const FwdCtx& ctx) const;
  Tensor embedding;
  std::vector<DecoderBlock> blocks;
  LayerNorm ln_out;
  Linear out_proj;
  int vocab = 0, d = 0;
};

}  // namespace mlca

#endif
