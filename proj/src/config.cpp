#include "config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "error.hpp"

namespace mlca {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

int to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const int x = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected integer, got '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected number, got '" + v + "'");
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const std::uint64_t x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected unsigned integer, got '" + v + "'");
  }
}

std::vector<int> to_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_int(key, trim(item)));
  if (out.empty()) throw ConfigError(key + ": expected comma-separated integers, got '" + v + "'");
  return out;
}

std::array<bool, 3> to_bool3(const std::string& key, const std::string& v) {
  const std::vector<int> xs = to_int_list(key, v);
  if (xs.size() != 3) throw ConfigError(key + ": expected exactly 3 comma-separated 0/1 flags");
  std::array<bool, 3> out{};
  for (int i = 0; i < 3; ++i) {
    if (xs[i] != 0 && xs[i] != 1) throw ConfigError(key + ": flags must be 0 or 1");
    out[i] = xs[i] == 1;
  }
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;
using Section = std::map<std::string, Setter>;

const std::map<std::string, Section>& schema() {
  static const std::map<std::string, Section> s = [] {
    std::map<std::string, Section> m;
    Section& corpus = m["corpus"];
    corpus["vocab"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.corpus.vocab = to_int(k, v);
    };
    corpus["speakers"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.corpus.speakers = to_int(k, v);
    };
    corpus["sessions"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.corpus.sessions = to_int(k, v);
    };
    corpus["train_utts"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.corpus.train_utts = to_int(k, v);
    };
    corpus["dev_utts"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.corpus.dev_utts = to_int(k, v);
    };
    corpus["eval_utts"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.corpus.eval_utts = to_int(k, v);
    };
    corpus["l_min"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.corpus.l_min = to_int(k, v);
    };
    corpus["l_max"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.corpus.l_max = to_int(k, v);
    };
    corpus["sigma_a"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.corpus.sigma_a = to_double(k, v);
    };
    corpus["p_confuse"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.corpus.p_confuse = to_double(k, v);
    };
    corpus["viseme_groups"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.corpus.viseme_groups = to_int(k, v);
    };
    corpus["p_vswap"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.corpus.p_vswap = to_double(k, v);
    };
    corpus["sigma_v"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.corpus.sigma_v = to_double(k, v);
    };
    corpus["audio_feats"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.corpus.audio_feats = to_int(k, v);
    };
    corpus["patch"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.corpus.patch = to_int(k, v);
    };
    corpus["seed"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.corpus.seed = to_u64(k, v);
    };

    Section& model = m["model"];
    model["dim"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.model.dim = to_int(k, v);
    };
    model["heads"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.model.heads = to_int(k, v);
    };
    model["n_ea"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.model.n_ea = to_int(k, v);
    };
    model["n_ev"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.model.n_ev = to_int(k, v);
    };
    model["dec_layers"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.model.dec_layers = to_int(k, v);
    };
    model["ff_dim"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.model.ff_dim = to_int(k, v);
    };
    model["mlp_hidden"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.model.mlp_hidden = to_int(k, v);
    };
    model["block"] = [](RunConfig& c, const std::string&, const std::string& v) {
      c.model.block = block_kind_from_string(v);
    };
    model["fusion"] = [](RunConfig& c, const std::string&, const std::string& v) {
      c.model.fusion = fusion_kind_from_string(v);
    };
    model["ca_enabled"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.model.ca_enabled = to_bool3(k, v);
    };
    model["lambda_ctc"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.model.lambda_ctc = to_double(k, v);
    };
    model["lambda_inter"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.model.lambda_inter = to_double(k, v);
    };
    model["label_smoothing"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.model.label_smoothing = to_double(k, v);
    };
    model["dropout"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.model.dropout = to_double(k, v);
    };
    model["seed"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.model.seed = to_u64(k, v);
    };
    model["mode"] = [](RunConfig& c, const std::string&, const std::string& v) {
      c.model.mode = modality_from_string(v);
    };
    model["video_channels"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.model.video_channels = to_int_list(k, v);
    };

    Section& train = m["train"];
    train["steps"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.train.steps = to_int(k, v);
    };
    train["batch_size"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.train.batch_size = to_int(k, v);
    };
    train["lr"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.train.lr = to_double(k, v);
    };
    train["warmup"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.train.warmup = to_int(k, v);
    };
    train["clip"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.train.clip = to_double(k, v);
    };

    Section& eval = m["eval"];
    eval["beam"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.eval_beam = to_int(k, v);
    };
    eval["batch_size"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.eval_batch = to_int(k, v);
    };
    return m;
  }();
  return s;
}

std::string known_keys(const Section& s) {
  std::string out;
  for (const auto& [k, _] : s) {
    if (!out.empty()) out += ", ";
    out += k;
  }
  return out;
}

void set_value(RunConfig& cfg, const std::string& section, const std::string& key,
               const std::string& value, const std::string& where) {
  const auto& sch = schema();
  const auto sit = sch.find(section);
  if (sit == sch.end()) {
    std::string names;
    for (const auto& [n, _] : sch) names += (names.empty() ? "" : ", ") + n;
    throw ConfigError(where + ": unknown section '" + section + "' (valid: " + names + ")");
  }
  const auto kit = sit->second.find(key);
  if (kit == sit->second.end())
    throw ConfigError(where + ": unknown key '" + key + "' in [" + section +
                      "] (valid: " + known_keys(sit->second) + ")");
  kit->second(cfg, section + "." + key, value);
}

}  // namespace

void RunConfig::validate() const {
  corpus.validate();
  model.validate();
  if (model.vocab != corpus.vocab)
    throw ConfigError("model.vocab " + std::to_string(model.vocab) + " != corpus.vocab " +
                      std::to_string(corpus.vocab));
  if (model.audio_feats != corpus.audio_feats || model.patch != corpus.patch)
    throw ConfigError("model input geometry does not match the corpus (audio_feats/patch)");
  if (train.steps <= 0 || train.batch_size <= 0) throw ConfigError("train: steps and batch_size must be positive");
  if (train.lr <= 0 || train.warmup <= 0) throw ConfigError("train: lr and warmup must be positive");
  if (eval_beam <= 0 || eval_batch <= 0) throw ConfigError("eval: beam and batch_size must be positive");
}

RunConfig preset_config(const std::string& name) {
  RunConfig cfg;  // defaults are the desk preset
  if (name == "desk" || name.empty()) return cfg;
  if (name == "paper-shape") {
    cfg.model.dim = 256;
    cfg.model.heads = 4;
    cfg.model.n_ea = 24;
    cfg.model.n_ev = 9;
    cfg.model.dec_layers = 6;
    cfg.model.ff_dim = 2048;
    cfg.model.mlp_hidden = 2048;
    cfg.model.dropout = 0.2;
    cfg.model.video_channels = {32, 64, 64, 128, 256};
    cfg.train.steps = 200000;
    cfg.train.warmup = 10000;
    return cfg;
  }
  throw ConfigError("unknown preset '" + name + "' (valid: desk, paper-shape)");
}

RunConfig parse_config_file(const std::string& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw PathError("cannot open config file: " + path);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (schema().find(section) == schema().end())
        throw ConfigError(where + ": unknown section '" + section + "'");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key=value");
    if (section.empty()) throw ConfigError(where + ": key=value before any [section]");
    set_value(base, section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)), where);
  }
  return base;
}

void apply_override(RunConfig& cfg, const std::string& spec) {
  const auto dot = spec.find('.');
  const auto eq = spec.find('=');
  if (dot == std::string::npos || eq == std::string::npos || dot > eq)
    throw ConfigError("override must look like section.key=value, got '" + spec + "'");
  set_value(cfg, trim(spec.substr(0, dot)), trim(spec.substr(dot + 1, eq - dot - 1)),
            trim(spec.substr(eq + 1)), "override '" + spec + "'");
}

}  // namespace mlca
