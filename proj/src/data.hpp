#ifndef MLCA_DATA_HPP
#define MLCA_DATA_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace mlca {

struct CorpusConfig {
  int vocab = 16;       // characters, ids 1..vocab (0 is the CTC blank)
  int speakers = 8;
  int sessions = 4;     // per split
  int train_utts = 2000;
  int dev_utts = 200;
  int eval_utts = 200;
  int l_min = 4;
  int l_max = 12;
  double sigma_a = 0.3;    // audio noise
  double p_confuse = 0.3;  // audio confusion-pair swap probability
  int viseme_groups = 4;
  double sigma_v = 0.3;    // video noise
  int vshift_max = 3;      // video stream lags by s ~ U{0..vshift_max} frames per utterance
  int audio_feats = 8;
  int patch = 8;           // video patch is patch x patch x 1
  std::uint64_t seed = 1;

  void validate() const;
};

struct UttRecord {
  std::string id;
  std::string session;
  std::string speaker;
  std::vector<int> target;    // char ids 1..C, no adjacent repeats
  std::vector<double> audio;  // [4L, F]
  std::vector<double> video;  // [L, patch, patch, 1]
};

struct Corpus {
  CorpusConfig cfg;
  std::vector<UttRecord> train, dev, eval;
  std::vector<int> confusion_partner;   // [C+1], partner[c] for c in 1..C
  std::vector<int> viseme_group;        // [C+1], group of c in 1..C
  std::vector<double> audio_templates;  // [C, F] (row c-1 is char c)
  std::vector<double> video_templates;  // [G, patch, patch]

  const std::vector<UttRecord>& split(const std::string& name) const;
};

// Writes <dir>/{train,dev,eval}.jsonl manifests (header line first) and
// matching .bin array containers. Fully determined by cfg.seed.
void generate_corpus(const CorpusConfig& cfg, const std::string& dir);

Corpus load_corpus(const std::string& dir);

std::string target_to_string(const std::vector<int>& target);
std::vector<int> string_to_target(const std::string& s);

struct Batch {
  std::vector<std::string> ids;
  std::vector<std::string> sessions, speakers;
  Tensor audio;                 // [B, Traw_max, F]
  std::vector<int> audio_lens;  // raw frames
  Tensor video;                 // [B, Lmax, p, p, 1]
  std::vector<int> video_lens;
  std::vector<std::vector<int>> targets;
};

// Length-bucketed batch index order for one epoch, shuffled by (seed, epoch).
std::vector<std::vector<int>> batch_order(const std::vector<UttRecord>& utts, int batch_size,
                                          std::uint64_t seed, int epoch);

Batch assemble_batch(const std::vector<UttRecord>& utts, const std::vector<int>& idx,
                     const CorpusConfig& cfg);

}  // namespace mlca

#endif
