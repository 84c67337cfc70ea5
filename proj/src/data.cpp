#include "data.hpp"

#include "ops.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "container.hpp"
#include "error.hpp"
#include "rng.hpp"

namespace mlca {

void CorpusConfig::validate() const {
  if (vocab < 2 || vocab > 26) throw ConfigError("corpus: vocab must be in [2,26]");
  if (vocab % 2 != 0) throw ConfigError("corpus: vocab must be even (confusion pairing)");
  if (viseme_groups < 2 || vocab % viseme_groups != 0)
    throw ConfigError("corpus: viseme_groups must be >= 2 and divide vocab");
  if (l_min < 1 || l_max < l_min) throw ConfigError("corpus: invalid length range");
  if (speakers < 2 || sessions < 1) throw ConfigError("corpus: need >= 2 speakers, >= 1 session");
  if (p_confuse < 0.0 || p_confuse > 1.0) throw ConfigError("corpus: p_confuse outside [0,1]");
  if (vshift_max < 0 || vshift_max >= l_min)
    throw ConfigError("corpus: vshift_max must be in [0, l_min)");
  if (train_utts < 1 || dev_utts < 1 || eval_utts < 1)
    throw ConfigError("corpus: each split needs at least one utterance");
}

std::string target_to_string(const std::vector<int>& target) {
  std::string s;
  for (int c : target) s.push_back(static_cast<char>('a' + c - 1));
  return s;
}

std::vector<int> string_to_target(const std::string& s) {
  std::vector<int> t;
  for (char ch : s) t.push_back(ch - 'a' + 1);
  return t;
}

const std::vector<UttRecord>& Corpus::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "dev") return dev;
  if (name == "eval") return eval;
  throw ConfigError("unknown split: " + name + " (expected train|dev|eval)");
}

namespace {

int hamming(const std::vector<double>& a, std::size_t ao, const std::vector<double>& b,
            std::size_t bo, std::size_t n) {
  int d = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (a[ao + i] != b[bo + i]) ++d;
  return d;
}

// Random +-1 rows with a pairwise Hamming separation floor, so the
// nearest-template oracle is essentially noise-free at the default sigmas.
std::vector<double> separated_sign_rows(int rows, int cols, int min_dist, Rng& rng) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    for (int attempt = 0;; ++attempt) {
      if (attempt > 100000) throw ConfigError("template generation failed to separate rows");
      std::vector<double> cand(cols);
      for (int i = 0; i < cols; ++i) cand[i] = rng.uniform() < 0.5 ? -1.0 : 1.0;
      bool ok = true;
      for (int q = 0; q < r && ok; ++q)
        ok = hamming(out, static_cast<std::size_t>(q) * cols, cand, 0,
                     static_cast<std::size_t>(cols)) >= min_dist;
      if (ok) {
        out.insert(out.end(), cand.begin(), cand.end());
        break;
      }
    }
  }
  return out;
}

// Involution over 1..C with partners in distinct viseme groups.
std::vector<int> make_confusion_pairs(const std::vector<int>& group, int c_count, Rng& rng) {
  for (int attempt = 0; attempt < 10000; ++attempt) {
    std::vector<int> order = rng.permutation(c_count);  // 0-based chars
    std::vector<int> partner(c_count + 1, 0);
    std::vector<bool> used(c_count, false);
    bool ok = true;
    for (int i = 0; i < c_count && ok; ++i) {
      const int a = order[i];
      if (used[a]) continue;
      int mate = -1;
      for (int j = i + 1; j < c_count; ++j) {
        const int b = order[j];
        if (!used[b] && group[b + 1] != group[a + 1]) {
          mate = b;
          break;
        }
      }
      if (mate < 0) {
        ok = false;
        break;
      }
      used[a] = used[mate] = true;
      partner[a + 1] = mate + 1;
      partner[mate + 1] = a + 1;
    }
    if (ok) return partner;
  }
  throw ConfigError("could not build cross-group confusion pairs");
}

struct SplitSpec {
  std::string name;
  int count;
  std::vector<int> speaker_pool;  // indices into global speaker list
};

}  // namespace

void generate_corpus(const CorpusConfig& cfg, const std::string& dir) {
  cfg.validate();
  const int C = cfg.vocab, G = cfg.viseme_groups, F = cfg.audio_feats, P = cfg.patch;
  Rng rng(cfg.seed);

  // viseme groups: shuffled chars split into G equal groups
  std::vector<int> group(C + 1, 0);
  {
    std::vector<int> order = rng.permutation(C);
    const int per = C / G;
    for (int i = 0; i < C; ++i) group[order[i] + 1] = i / per;
  }
  std::vector<int> partner = make_confusion_pairs(group, C, rng);
  std::vector<double> audio_tpl = separated_sign_rows(C, F, std::max(2, F / 4), rng);
  std::vector<double> video_tpl = separated_sign_rows(G, P * P, std::max(2, P * P / 4), rng);

  // dev/eval speakers are held out of training
  const int n_train_spk = std::max(1, (cfg.speakers * 3) / 4);
  std::vector<int> train_pool, held_pool;
  for (int s = 0; s < cfg.speakers; ++s)
    (s < n_train_spk ? train_pool : held_pool).push_back(s);
  if (held_pool.empty()) held_pool.push_back(cfg.speakers - 1);

  const std::vector<SplitSpec> splits = {{"train", cfg.train_utts, train_pool},
                                         {"dev", cfg.dev_utts, held_pool},
                                         {"eval", cfg.eval_utts, held_pool}};

  nlohmann::json cfg_json = {{"vocab", C},
                             {"speakers", cfg.speakers},
                             {"sessions", cfg.sessions},
                             {"train_utts", cfg.train_utts},
                             {"dev_utts", cfg.dev_utts},
                             {"eval_utts", cfg.eval_utts},
                             {"l_min", cfg.l_min},
                             {"l_max", cfg.l_max},
                             {"sigma_a", cfg.sigma_a},
                             {"p_confuse", cfg.p_confuse},
                             {"viseme_groups", G},
                             {"sigma_v", cfg.sigma_v},
                             {"vshift_max", cfg.vshift_max},
                             {"audio_feats", F},
                             {"patch", P},
                             {"seed", cfg.seed}};

  for (const auto& sp : splits) {
    std::ofstream mf(dir + "/" + sp.name + ".jsonl", std::ios::trunc);
    if (!mf) throw PathError("cannot write manifest in " + dir);
    nlohmann::json header = {{"type", "header"},
                             {"version", kContainerVersion},
                             {"config", cfg_json},
                             {"confusion_partner", partner},
                             {"viseme_group", group}};
    mf << header.dump() << "\n";

    ContainerWriter cw;
    cw.set_meta({{"split", sp.name}});
    cw.add("templates/audio", {C, F}, audio_tpl);
    cw.add("templates/video", {G, P, P}, video_tpl);

    for (int u = 0; u < sp.count; ++u) {
      char idbuf[64];
      std::snprintf(idbuf, sizeof(idbuf), "%s-%05d", sp.name.c_str(), u);
      const std::string id = idbuf;
      const int L = cfg.l_min + rng.randint(cfg.l_max - cfg.l_min + 1);
      std::vector<int> target(L);
      for (int j = 0; j < L; ++j) {
        int c;
        do {
          c = 1 + rng.randint(C);
        } while (j > 0 && c == target[j - 1]);  // CTC needs a gap for repeats
        target[j] = c;
      }
      // audio: 4 frames per char, template possibly swapped to the partner
      std::vector<double> audio(static_cast<std::size_t>(4 * L) * F);
      for (int j = 0; j < L; ++j) {
        const int emit = (rng.uniform() < cfg.p_confuse) ? partner[target[j]] : target[j];
        for (int f = 0; f < 4; ++f)
          for (int k = 0; k < F; ++k)
            audio[(static_cast<std::size_t>(4 * j + f)) * F + k] =
                audio_tpl[static_cast<std::size_t>(emit - 1) * F + k] +
                rng.normal(0.0, cfg.sigma_a);
      }
      // video: 1 frame per char from the true char's viseme-group template,
      // but the whole stream lags the audio by a per-utterance random shift s:
      // frame j depicts char j-s, and the first s frames are neutral (noise
      // only). The lag is not observable from either stream alone, so reading
      // the right frame requires content-based cross-modal alignment rather
      // than position-wise combination.
      const int s = rng.randint(cfg.vshift_max + 1);
      std::vector<double> video(static_cast<std::size_t>(L) * P * P);
      for (int j = 0; j < L; ++j) {
        for (int k = 0; k < P * P; ++k) {
          const double base =
              j < s ? 0.0
                    : video_tpl[static_cast<std::size_t>(group[target[j - s]]) * P * P + k];
          video[static_cast<std::size_t>(j) * P * P + k] = base + rng.normal(0.0, cfg.sigma_v);
        }
      }
      const std::string session = sp.name + "-s" + std::to_string(rng.randint(cfg.sessions));
      char spkbuf[16];
      std::snprintf(spkbuf, sizeof(spkbuf), "spk%02d",
                    sp.speaker_pool[static_cast<std::size_t>(rng.randint(
                        static_cast<int>(sp.speaker_pool.size())))]);
      nlohmann::json line = {{"id", id},
                             {"session", session},
                             {"speaker", spkbuf},
                             {"target", target_to_string(target)},
                             {"audio", id + "/audio"},
                             {"video", id + "/video"}};
      mf << line.dump() << "\n";
      cw.add(id + "/audio", {4 * L, F}, audio);
      cw.add(id + "/video", {L, P, P, 1}, video);
    }
    cw.write(dir + "/" + sp.name + ".bin");
  }
}

namespace {

std::vector<UttRecord> load_split(const std::string& dir, const std::string& name,
                                  nlohmann::json* header_out) {
  std::ifstream mf(dir + "/" + name + ".jsonl");
  if (!mf) throw PathError("missing manifest: " + dir + "/" + name + ".jsonl");
  ContainerReader cr(dir + "/" + name + ".bin");
  std::vector<UttRecord> out;
  std::string line;
  bool first = true;
  while (std::getline(mf, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    if (first) {
      first = false;
      if (j.value("type", "") != "header")
        throw ConfigError("manifest " + name + ".jsonl: missing header line");
      if (header_out) *header_out = j;
      continue;
    }
    UttRecord r;
    r.id = j["id"].get<std::string>();
    r.session = j["session"].get<std::string>();
    r.speaker = j["speaker"].get<std::string>();
    r.target = string_to_target(j["target"].get<std::string>());
    r.audio = cr.read(j["audio"].get<std::string>());
    r.video = cr.read(j["video"].get<std::string>());
    out.push_back(std::move(r));
  }
  if (out.empty()) throw ConfigError("empty corpus split: " + name);
  return out;
}

}  // namespace

Corpus load_corpus(const std::string& dir) {
  Corpus c;
  nlohmann::json header;
  c.train = load_split(dir, "train", &header);
  c.dev = load_split(dir, "dev", nullptr);
  c.eval = load_split(dir, "eval", nullptr);
  const auto& jc = header["config"];
  c.cfg.vocab = jc["vocab"];
  c.cfg.speakers = jc["speakers"];
  c.cfg.sessions = jc["sessions"];
  c.cfg.train_utts = jc["train_utts"];
  c.cfg.dev_utts = jc["dev_utts"];
  c.cfg.eval_utts = jc["eval_utts"];
  c.cfg.l_min = jc["l_min"];
  c.cfg.l_max = jc["l_max"];
  c.cfg.sigma_a = jc["sigma_a"];
  c.cfg.p_confuse = jc["p_confuse"];
  c.cfg.viseme_groups = jc["viseme_groups"];
  c.cfg.sigma_v = jc["sigma_v"];
  c.cfg.p_vswap = jc["p_vswap"];
  c.cfg.audio_feats = jc["audio_feats"];
  c.cfg.patch = jc["patch"];
  c.cfg.seed = jc["seed"];
  c.confusion_partner = header["confusion_partner"].get<std::vector<int>>();
  c.viseme_group = header["viseme_group"].get<std::vector<int>>();
  ContainerReader cr(dir + "/train.bin");
  c.audio_templates = cr.read("templates/audio");
  c.video_templates = cr.read("templates/video");
  return c;
}

std::vector<std::vector<int>> batch_order(const std::vector<UttRecord>& utts, int batch_size,
                                          std::uint64_t seed, int epoch) {
  if (utts.empty()) throw ConfigError("batcher: empty corpus");
  if (batch_size < 1) throw ConfigError("batcher: batch_size must be >= 1");
  std::vector<int> idx(utts.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    return utts[a].target.size() < utts[b].target.size();
  });
  std::vector<std::vector<int>> batches;
  for (std::size_t i = 0; i < idx.size(); i += batch_size) {
    const std::size_t j = std::min(idx.size(), i + batch_size);
    batches.emplace_back(idx.begin() + i, idx.begin() + j);
  }
  Rng rng(splitmix64(seed) ^ splitmix64(0xb47c0 + static_cast<std::uint64_t>(epoch)));
  rng.shuffle(batches);
  return batches;
}

Batch assemble_batch(const std::vector<UttRecord>& utts, const std::vector<int>& idx,
                     const CorpusConfig& cfg) {
  if (idx.empty()) throw ConfigError("assemble_batch: empty index list");
  const int B = static_cast<int>(idx.size());
  const int F = cfg.audio_feats, P = cfg.patch;
  int t_raw_max = 0, l_max = 0;
  for (int i : idx) {
    const int L = static_cast<int>(utts[i].target.size());
    t_raw_max = std::max(t_raw_max, 4 * L);
    l_max = std::max(l_max, L);
  }
  Batch b;
  b.audio = Tensor::zeros({B, t_raw_max, F});
  b.video = Tensor::zeros({B, l_max, P, P, 1});
  for (int n = 0; n < B; ++n) {
    const UttRecord& u = utts[idx[n]];
    const int L = static_cast<int>(u.target.size());
    b.ids.push_back(u.id);
    b.sessions.push_back(u.session);
    b.speakers.push_back(u.speaker);
    b.targets.push_back(u.target);
    b.audio_lens.push_back(4 * L);
    b.video_lens.push_back(L);
    std::copy(u.audio.begin(), u.audio.end(),
              b.audio.data().begin() + static_cast<std::size_t>(n) * t_raw_max * F);
    std::copy(u.video.begin(), u.video.end(),
              b.video.data().begin() + static_cast<std::size_t>(n) * l_max * P * P);
  }
  return b;
}

}  // namespace mlca
