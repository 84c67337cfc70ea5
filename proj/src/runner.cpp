#include "runner.hpp"

#include <algorithm>
#include <cstdio>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include "error.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "train.hpp"

namespace mlca {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw PathError("cannot create directory " + dir + ": " + ec.message());
}

json eval_to_json(const EvalResult& r, const std::string& split) {
  return json{{"split", split},
              {"cer_attention", r.cer_attention},
              {"cer_ctc", r.cer_ctc},
              {"cp_cer_attention", r.cp_cer_attention},
              {"n_utts", r.n_utts}};
}

void write_eval_json(const std::string& out_dir, const EvalResult& r, const std::string& split) {
  std::ofstream out(out_dir + "/eval.json");
  out << eval_to_json(r, split).dump(2) << "\n";
}

std::string eval_summary(const EvalResult& r, const std::string& split) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << split << ": cer_attention=" << r.cer_attention
     << " cer_ctc=" << r.cer_ctc << " cp_cer=" << r.cp_cer_attention << " (" << r.n_utts
     << " utts)";
  return os.str();
}

// trained-model size past which a run needs an explicit opt-in
constexpr std::int64_t kDeskParamLimit = 5'000'000;

double median(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  if (n == 0) return 0.0;
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

// keeps the model's input geometry in lockstep with the corpus on disk
void sync_to_corpus(RunConfig& cfg, const Corpus& corpus) {
  cfg.corpus = corpus.cfg;
  cfg.model.vocab = corpus.cfg.vocab;
  cfg.model.audio_feats = corpus.cfg.audio_feats;
  cfg.model.patch = corpus.cfg.patch;
}

}  // namespace

void cmd_synth_data(const RunConfig& cfg, const std::string& data_dir, std::string* summary) {
  cfg.corpus.validate();
  ensure_dir(data_dir);
  generate_corpus(cfg.corpus, data_dir);
  if (summary) {
    std::ostringstream os;
    os << "wrote corpus to " << data_dir << " (train=" << cfg.corpus.train_utts
       << " dev=" << cfg.corpus.dev_utts << " eval=" << cfg.corpus.eval_utts
       << " vocab=" << cfg.corpus.vocab << " seed=" << cfg.corpus.seed << ")";
    *summary = os.str();
  }
}

EvalResult cmd_train(RunConfig cfg, const std::string& data_dir, const std::string& out_dir,
                     const TrainRunOptions& opt, std::string* summary) {
  const Corpus corpus = load_corpus(data_dir);
  sync_to_corpus(cfg, corpus);
  cfg.validate();
  if (!opt.allow_large && count_params(cfg.model) > kDeskParamLimit)
    throw ConfigError("model has " + std::to_string(count_params(cfg.model)) +
                      " parameters; pass allow-large to train something this big");
  ensure_dir(out_dir);

  if (!opt.init_asr.empty() != !opt.init_vsr.empty())
    throw ConfigError("pretrained init needs both the asr and vsr checkpoints");

  std::int64_t start_step = 0;
  std::unique_ptr<AvsrModel> model;
  std::unique_ptr<Checkpoint> resume_ckpt;
  if (!opt.resume_from.empty()) {
    if (!opt.init_asr.empty()) throw ConfigError("resume and pretrained init are exclusive");
    resume_ckpt = std::make_unique<Checkpoint>(Checkpoint::load(opt.resume_from));
    model = std::make_unique<AvsrModel>(model_from_checkpoint(*resume_ckpt));
    start_step = resume_ckpt->step;
  } else if (!opt.init_asr.empty()) {
    model = std::make_unique<AvsrModel>(init_from_pretrained(
        cfg.model, Checkpoint::load(opt.init_asr), Checkpoint::load(opt.init_vsr),
        opt.copy_decoder));
  } else {
    model = std::make_unique<AvsrModel>(cfg.model);
  }

  TrainOptions topt = cfg.train;
  topt.metric_log = out_dir + "/metrics.jsonl";
  topt.ckpt_path = out_dir + "/ckpt.bin";
  Trainer trainer(*model, topt);
  if (resume_ckpt) trainer.restore_optimizer(*resume_ckpt);
  const TrainResult tr = trainer.run(corpus.train, corpus.cfg, start_step);

  const EvalResult ev =
      evaluate_split(*model, corpus, "dev", cfg.eval_beam, cfg.eval_batch);
  write_eval_json(out_dir, ev, "dev");
  if (summary) {
    std::ostringstream os;
    os << "trained " << tr.final_step << " steps, " << model->count_params() << " params; "
       << eval_summary(ev, "dev");
    *summary = os.str();
  }
  return ev;
}

EvalResult cmd_eval(const std::string& ckpt_path, const std::string& data_dir,
                    const std::string& split, int beam, int batch_size,
                    const std::string& out_dir, std::string* summary) {
  const Checkpoint ckpt = Checkpoint::load(ckpt_path);
  const AvsrModel model = model_from_checkpoint(ckpt);
  const Corpus corpus = load_corpus(data_dir);
  ensure_dir(out_dir);
  const EvalResult ev = evaluate_split(model, corpus, split, beam, batch_size);
  write_eval_json(out_dir, ev, split);
  if (summary) *summary = eval_summary(ev, split);
  return ev;
}

EvalResult cmd_decode(const std::string& ckpt_path, const std::string& data_dir,
                      const std::string& split, int beam, int batch_size,
                      const std::string& out_dir, std::string* summary) {
  const Checkpoint ckpt = Checkpoint::load(ckpt_path);
  const AvsrModel model = model_from_checkpoint(ckpt);
  const Corpus corpus = load_corpus(data_dir);
  ensure_dir(out_dir);
  const EvalResult ev =
      evaluate_split(model, corpus, split, beam, batch_size, out_dir + "/hyps.jsonl");
  write_eval_json(out_dir, ev, split);
  if (summary) *summary = eval_summary(ev, split) + "; hypotheses in " + out_dir + "/hyps.jsonl";
  return ev;
}

namespace {

struct Variant {
  std::string name;
  Modality mode;
  FusionKind fusion;
  std::array<bool, 3> ca;
};

const std::vector<Variant>& ablate_grid() {
  static const std::vector<Variant> g = {
      {"asr", Modality::kAsr, FusionKind::kNone, {false, false, false}},
      {"vsr", Modality::kVsr, FusionKind::kNone, {false, false, false}},
      {"mlca-111", Modality::kAvsr, FusionKind::kMlca, {true, true, true}},
      {"mlca-001", Modality::kAvsr, FusionKind::kMlca, {false, false, true}},
      {"add", Modality::kAvsr, FusionKind::kAdd, {false, false, false}},
      {"mlp", Modality::kAvsr, FusionKind::kMlp, {false, false, false}},
  };
  return g;
}

}  // namespace

AblateResult cmd_ablate(const RunConfig& cfg_in, const std::string& data_dir,
                        const std::string& out_dir, const std::vector<std::uint64_t>& seeds,
                        int jobs, std::string* summary) {
  if (seeds.empty()) throw ConfigError("ablate needs at least one seed");
  const Corpus corpus = load_corpus(data_dir);
  ensure_dir(out_dir);

  struct Job {
    Variant variant;
    std::uint64_t seed;
  };
  std::vector<Job> work;
  for (const Variant& v : ablate_grid())
    for (const std::uint64_t s : seeds) work.push_back({v, s});

  std::vector<AblateRow> rows(work.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::string first_error;
  std::mutex err_mu;

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= work.size() || failed.load()) return;
      const Job& job = work[i];
      try {
        RunConfig cfg = cfg_in;
        sync_to_corpus(cfg, corpus);
        cfg.model.mode = job.variant.mode;
        cfg.model.fusion = job.variant.fusion;
        cfg.model.ca_enabled = job.variant.ca;
        cfg.model.seed = job.seed;
        cfg.validate();
        AvsrModel model(cfg.model);
        TrainOptions topt = cfg.train;  // no per-run checkpoint or metric log
        Trainer trainer(model, topt);
        trainer.run(corpus.train, corpus.cfg, 0);
        AblateRow row;
        row.variant = job.variant.name;
        row.seed = job.seed;
        row.n_params = model.count_params();
        row.eval = evaluate_split(model, corpus, "dev", cfg.eval_beam, cfg.eval_batch);
        rows[i] = std::move(row);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lk(err_mu);
        if (!failed.exchange(true))
          first_error = std::string(job.variant.name) + " seed " + std::to_string(job.seed) +
                        ": " + e.what();
      }
    }
  };
  const int n_threads = std::max(1, std::min<int>(jobs, static_cast<int>(work.size())));
  std::vector<std::thread> pool;
  for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (failed.load()) throw VerificationError("ablate run failed: " + first_error);

  AblateResult result;
  result.rows = std::move(rows);

  std::ofstream jl(out_dir + "/ablate.jsonl");
  for (const AblateRow& r : result.rows) {
    json j = eval_to_json(r.eval, "dev");
    j["variant"] = r.variant;
    j["seed"] = r.seed;
    j["n_params"] = r.n_params;
    jl << j.dump() << "\n";
  }

  for (const Variant& v : ablate_grid()) {
    std::vector<double> cers;
    for (const AblateRow& r : result.rows)
      if (r.variant == v.name) cers.push_back(r.eval.cer_attention);
    result.medians.emplace_back(v.name, median(std::move(cers)));
  }

  std::ostringstream table;
  table << std::left << std::setw(10) << "variant" << std::right << std::setw(12) << "seed"
        << std::setw(12) << "cer_att" << std::setw(12) << "cer_ctc" << std::setw(12) << "cp_cer"
        << std::setw(12) << "params" << "\n";
  table << std::fixed << std::setprecision(4);
  for (const AblateRow& r : result.rows)
    table << std::left << std::setw(10) << r.variant << std::right << std::setw(12) << r.seed
          << std::setw(12) << r.eval.cer_attention << std::setw(12) << r.eval.cer_ctc
          << std::setw(12) << r.eval.cp_cer_attention << std::setw(12) << r.n_params << "\n";
  table << "\n" << std::left << std::setw(10) << "variant" << std::right << std::setw(14)
        << "median_cer" << "\n";
  for (const auto& [name, med] : result.medians)
    table << std::left << std::setw(10) << name << std::right << std::setw(14) << med << "\n";
  std::ofstream(out_dir + "/ablate.txt") << table.str();
  if (summary) *summary = table.str();
  return result;
}

bool cmd_gradcheck(int n_cfg, std::uint64_t seed, std::string* report) {
  const GradCheckResult r = run_gradcheck_suite(n_cfg, seed, report);
  if (report) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3e", r.max_rel_err);
    *report += std::string("gradcheck: ") + (r.ok ? "ok" : "FAILED") + ", max_rel_err=" + buf +
               (r.ok ? "" : " at " + r.worst) + "\n";
  }
  return r.ok;
}

bool cmd_ctc_oracle(int n_cases, std::uint64_t seed, std::string* report) {
  const SuiteResult r = run_ctc_oracle_suite(n_cases, seed, report);
  if (report) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3e", r.worst);
    *report += std::string("ctc-oracle: ") + (r.ok ? "ok" : "FAILED") + ", cases=" +
               std::to_string(r.cases) + ", worst=" + buf +
               (r.detail.empty() ? "" : " (" + r.detail + ")") + "\n";
  }
  return r.ok;
}

}  // namespace mlca
