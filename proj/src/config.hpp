#ifndef MLCA_CONFIG_HPP
#define MLCA_CONFIG_HPP

#include <string>

#include "data.hpp"
#include "model.hpp"
#include "train.hpp"

namespace mlca {

// Everything a run needs, assembled from a preset plus an optional INI-style
// config file ([corpus] / [model] / [train] / [eval] sections, key=value,
// '#' comments). Unknown sections or keys are hard errors.
struct RunConfig {
  CorpusConfig corpus;
  ModelConfig model;
  TrainOptions train;
  int eval_beam = 5;
  int eval_batch = 16;

  void validate() const;
};

// "desk" (the default, small enough for CI) or "paper-shape" (the full-size
// geometry; constructible everywhere, but training it requires an explicit
// opt-in at the command level).
RunConfig preset_config(const std::string& name);

RunConfig parse_config_file(const std::string& path, RunConfig base);

// Applies a single "section.key=value" override on top of cfg.
void apply_override(RunConfig& cfg, const std::string& spec);

}  // namespace mlca

#endif
