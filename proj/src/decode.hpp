#ifndef MLCA_DECODE_HPP
#define MLCA_DECODE_HPP

#include <string>
#include <vector>

#include "data.hpp"
#include "metrics.hpp"
#include "model.hpp"

namespace mlca {

// argmax-per-frame -> collapse repeats -> drop blanks
std::vector<int> ctc_collapse(const std::vector<int>& frame_argmax, int blank = 0);

// CTC greedy decode over a batch; returns char-id sequences.
std::vector<std::vector<int>> decode_greedy_ctc(const AvsrModel& model, const FeatureSeq& memory);

struct BeamResult {
  std::vector<int> tokens;  // char ids, no sos/eos
  double score = 0.0;       // length-normalized log probability
};

// Length-normalized beam search over the attention decoder; beam=1 is greedy.
std::vector<BeamResult> decode_attention(const AvsrModel& model, const FeatureSeq& memory,
                                         int beam);

struct EvalResult {
  double cer_attention = 0.0;
  double cer_ctc = 0.0;
  double cp_cer_attention = 0.0;
  int n_utts = 0;
};

// Scores a corpus split: corpus-level CER for attention (beam) and CTC-greedy
// decodes, plus cpCER built from session/speaker streams. Optionally writes
// hypotheses as JSON-lines (session, speaker, start, text).
EvalResult evaluate_split(const AvsrModel& model, const Corpus& corpus, const std::string& split,
                          int beam, int batch_size, const std::string& hyp_out_path = "");

}  // namespace mlca

#endif
