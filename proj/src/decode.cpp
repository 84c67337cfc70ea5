#include "decode.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

namespace mlca {

std::vector<int> ctc_collapse(const std::vector<int>& frame_argmax, int blank) {
  std::vector<int> out;
  int prev = blank;
  for (int s : frame_argmax) {
    if (s != blank && s != prev) out.push_back(s);
    prev = s;
  }
  return out;
}

std::vector<std::vector<int>> decode_greedy_ctc(const AvsrModel& model,
                                                const FeatureSeq& memory) {
  Tensor logits = model.ctc_head.forward(memory.values);  // [B,T,V+1]
  const int B = logits.shape()[0], T = logits.shape()[1], V1 = logits.shape()[2];
  const double* p = logits.data().data();
  std::vector<std::vector<int>> out(B);
  for (int b = 0; b < B; ++b) {
    std::vector<int> frames;
    for (int t = 0; t < memory.lens[b]; ++t) {
      const double* row = p + ((std::int64_t)b * T + t) * V1;
      int best = 0;
      for (int k = 1; k < V1; ++k)
        if (row[k] > row[best]) best = k;
      frames.push_back(best);
    }
    out[b] = ctc_collapse(frames);
  }
  return out;
}

namespace {

struct Hyp {
  std::vector<int> tokens;  // includes sos, maybe eos
  double logp = 0.0;
  bool done = false;
};

FeatureSeq repeat_memory(const FeatureSeq& mem1, int n) {
  std::vector<Tensor> copies(n, mem1.values);
  return FeatureSeq{concat(copies, 0), std::vector<int>(n, mem1.lens[0])};
}

}  // namespace

std::vector<BeamResult> decode_attention(const AvsrModel& model, const FeatureSeq& memory,
                                         int beam) {
  if (beam < 1) throw ConfigError("decode_attention: beam must be >= 1");
  const int B = memory.batch();
  const int eos = model.cfg.eos();
  std::vector<BeamResult> results(B);
  FwdCtx ctx = model.make_ctx(/*training=*/false, 0);
  for (int b = 0; b < B; ++b) {
    FeatureSeq mem1{reshape(slice(memory.values, 0, b, 1), {1, memory.time(), memory.dim()}),
                    {memory.lens[b]}};
    const int max_len = memory.lens[b] + 5;
    std::vector<Hyp> hyps{{{model.cfg.sos()}, 0.0, false}};
    for (int step = 0; step < max_len; ++step) {
      std::vector<int> active;
      for (std::size_t i = 0; i < hyps.size(); ++i)
        if (!hyps[i].done) active.push_back(static_cast<int>(i));
      if (active.empty()) break;
      std::vector<std::vector<int>> tok;
      for (int i : active) tok.push_back(hyps[i].tokens);
      Tensor logits = model.decoder.forward(tok, repeat_memory(mem1, (int)active.size()), ctx);
      const int L = logits.shape()[1], V = logits.shape()[2];
      Tensor lp = log_softmax(logits, -1);
      const double* plp = lp.data().data();
      std::vector<Hyp> next;
      for (const Hyp& h : hyps)
        if (h.done) next.push_back(h);
      for (std::size_t a = 0; a < active.size(); ++a) {
        const Hyp& h = hyps[active[a]];
        const double* row = plp + ((std::int64_t)a * L + (L - 1)) * V;
        // rank the row once; only the top `beam` continuations can survive.
        // pad (0) and sos are never emitted.
        std::vector<int> idx;
        for (int k = 1; k < V; ++k)
          if (k != model.cfg.sos()) idx.push_back(k);
        const int take = std::min<int>(static_cast<int>(idx.size()), beam);
        std::partial_sort(idx.begin(), idx.begin() + take, idx.end(),
                          [&](int x, int y) { return row[x] > row[y]; });
        for (int k = 0; k < take; ++k) {
          Hyp nh = h;
          nh.tokens.push_back(idx[k]);
          nh.logp += row[idx[k]];
          nh.done = (idx[k] == eos);
          next.push_back(std::move(nh));
        }
      }
      std::sort(next.begin(), next.end(),
                [](const Hyp& x, const Hyp& y) { return x.logp > y.logp; });
      if (static_cast<int>(next.size()) > beam) next.resize(beam);
      hyps = std::move(next);
      bool all_done = true;
      for (const Hyp& h : hyps) all_done = all_done && h.done;
      if (all_done) break;
    }
    // pick by length-normalized score; force-close open hypotheses
    BeamResult best;
    double best_score = -1e300;
    for (const Hyp& h : hyps) {
      std::vector<int> chars;
      for (std::size_t i = 1; i < h.tokens.size(); ++i)
        if (h.tokens[i] != eos) chars.push_back(h.tokens[i]);
      const double norm = static_cast<double>(chars.size() + 1);  // +1 for eos
      const double score = h.logp / norm;
      if (score > best_score) {
        best_score = score;
        best = BeamResult{chars, score};
      }
    }
    results[b] = best;
  }
  return results;
}

EvalResult evaluate_split(const AvsrModel& model, const Corpus& corpus, const std::string& split,
                          int beam, int batch_size, const std::string& hyp_out_path) {
  const auto& utts = corpus.split(split);
  EvalResult res;
  res.n_utts = static_cast<int>(utts.size());
  std::int64_t ref_len = 0, att_dist = 0, ctc_dist = 0;
  // session -> speaker -> (utt order, text); start order = corpus order
  std::map<std::string, std::map<std::string, std::string>> session_refs, session_hyps;
  std::ofstream hypf;
  if (!hyp_out_path.empty()) {
    hypf.open(hyp_out_path, std::ios::trunc);
    if (!hypf) throw PathError("cannot open hypothesis output: " + hyp_out_path);
  }
  FwdCtx ctx = model.make_ctx(/*training=*/false, 0);
  for (std::size_t pos = 0; pos < utts.size(); pos += batch_size) {
    std::vector<int> idx;
    for (std::size_t i = pos; i < std::min(utts.size(), pos + batch_size); ++i)
      idx.push_back(static_cast<int>(i));
    Batch batch = assemble_batch(utts, idx, corpus.cfg);
    FeatureSeq memory = model.normed(model.encode(batch, ctx, nullptr));
    auto ctc_hyps = decode_greedy_ctc(model, memory);
    auto att_hyps = decode_attention(model, memory, beam);
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const UttRecord& u = utts[idx[b]];
      const std::string ref = target_to_string(u.target);
      const std::string hyp_att = target_to_string(att_hyps[b].tokens);
      const std::string hyp_ctc = target_to_string(ctc_hyps[b]);
      ref_len += static_cast<std::int64_t>(ref.size());
      att_dist += edit_distance(ref, hyp_att);
      ctc_dist += edit_distance(ref, hyp_ctc);
      session_refs[u.session][u.speaker] += ref;
      session_hyps[u.session][u.speaker] += hyp_att;
      if (hypf) {
        nlohmann::json jl = {{"session", u.session},
                             {"speaker", u.speaker},
                             {"start", idx[b]},
                             {"text", hyp_att}};
        hypf << jl.dump() << "\n";
      }
    }
  }
  res.cer_attention = static_cast<double>(att_dist) / ref_len;
  res.cer_ctc = static_cast<double>(ctc_dist) / ref_len;
  std::vector<SessionTranscripts> sessions;
  for (const auto& [sid, refs] : session_refs) {
    SessionTranscripts st;
    st.session = sid;
    for (const auto& [spk, text] : refs) {
      st.refs.push_back(text);
      st.hyps.push_back(session_hyps[sid][spk]);
    }
    sessions.push_back(std::move(st));
  }
  res.cp_cer_attention = cp_cer(sessions).rate;
  return res;
}

}  // namespace mlca
