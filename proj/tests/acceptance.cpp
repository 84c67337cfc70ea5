// Acceptance suite: one PASS/FAIL line per pinned criterion, exit code 0 only
// if every criterion holds. Each check is self-contained and rebuilds what it
// needs from scratch, so a run is reproducible end to end.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "config.hpp"
#include "data.hpp"
#include "decode.hpp"
#include "error.hpp"
#include "fusion.hpp"
#include "gradcheck.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "oracles.hpp"
#include "rng.hpp"
#include "runner.hpp"
#include "train.hpp"

using namespace mlca;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int idx, const std::string& name, bool ok, const std::string& detail) {
  std::printf("%s criterion %d: %s%s%s\n", ok ? "PASS" : "FAIL", idx, name.c_str(),
              detail.empty() ? "" : " -- ", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

fs::path work_dir() {
  static fs::path d = [] {
    fs::path p = fs::temp_directory_path() / "mlca_acceptance";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return d;
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3e", x);
  return buf;
}

// ---------------------------------------------------------------------------
// 1. finite-difference gradient check across every operator and block

void criterion_gradients() {
  std::string log;
  const GradCheckResult r = run_gradcheck_suite(50, 2024, &log);
  report(1, "autodiff agrees with finite differences (50 configs, tol 1e-4)",
         r.ok && r.max_rel_err < 1e-4,
         "max_rel_err=" + fmt(r.max_rel_err) + (r.ok ? "" : " worst=" + r.worst));
}

// ---------------------------------------------------------------------------
// 2. CTC forward-backward vs exhaustive path enumeration

void criterion_ctc_oracle() {
  std::string log;
  const SuiteResult r = run_ctc_oracle_suite(200, 2024, &log);
  report(2, "ctc loss equals exhaustive enumeration (200 cases, tol 1e-6)",
         r.ok && r.cases >= 200 && r.worst < 1e-6,
         "cases=" + std::to_string(r.cases) + " worst=" + fmt(r.worst));
}

// ---------------------------------------------------------------------------
// 3. single-step fusion chain vs a hand evaluation

std::vector<double> apply_linear(const Linear& l, const std::vector<double>& x) {
  const int d_in = l.weight.shape()[0], d_out = l.weight.shape()[1];
  std::vector<double> y(d_out);
  for (int o = 0; o < d_out; ++o) {
    double acc = l.bias.data()[o];
    for (int i = 0; i < d_in; ++i) acc += x[i] * l.weight.data()[i * d_out + o];
    y[o] = acc;
  }
  return y;
}

void criterion_fusion_chain() {
  double worst_chain = 0.0, worst_identity = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 3 + trial % 6;
    ParamStore ps;
    Rng init(400 + trial);
    CrossAttentionModule m(ps, "ca", d, 1, init);
    // projections construct zeroed; fill them so the algebra check is not
    // trivially the residual path
    for (Tensor* w : {&m.audio_mhsa.wo.weight, &m.visual_mhsa.wo.weight, &m.amma.wo.weight,
                      &m.vmma.wo.weight})
      for (double& x : w->data()) x = init.uniform(-0.5, 0.5);
    Rng rng(500 + trial);
    FeatureSeq ha{Tensor::zeros({1, 1, d}), {1}};
    FeatureSeq hv{Tensor::zeros({1, 1, d}), {1}};
    for (double& x : ha.values.data()) x = rng.uniform(-1.5, 1.5);
    for (double& x : hv.values.data()) x = rng.uniform(-1.5, 1.5);
    const std::vector<double> a0 = ha.values.data();
    const std::vector<double> v0 = hv.values.data();

    // with one query/key the softmax weight is exactly 1, so each attention
    // sublayer reduces to wo(wv(kv)); intermediates query, raw inputs key
    auto att = [&](const AttentionParams& p, const std::vector<double>& kv) {
      return apply_linear(p.wo, apply_linear(p.wv, kv));
    };
    auto addv = [](std::vector<double> a, const std::vector<double>& b) {
      for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
      return a;
    };
    const auto ta = addv(a0, att(m.audio_mhsa, a0));
    const auto tv = addv(v0, att(m.visual_mhsa, v0));
    const auto ha_p = addv(ta, att(m.amma, v0));
    const auto hv_p = addv(tv, att(m.vmma, a0));
    const auto hav = addv(ha_p, hv_p);

    const CaOut out = improved_cross_attention(ha, hv, m);
    for (int i = 0; i < d; ++i) {
      worst_chain = std::max({worst_chain, std::abs(out.h_a_prime.values.data()[i] - ha_p[i]),
                              std::abs(out.h_v_prime.values.data()[i] - hv_p[i]),
                              std::abs(out.h_av.values.data()[i] - hav[i])});
      worst_identity = std::max(
          worst_identity, std::abs(out.h_av.values.data()[i] - out.h_a_prime.values.data()[i] -
                                   out.h_v_prime.values.data()[i]));
    }
  }
  report(3, "single-step cross-attention chain matches hand algebra (tol 1e-10)",
         worst_chain < 1e-10 && worst_identity < 1e-12,
         "chain=" + fmt(worst_chain) + " sum-identity=" + fmt(worst_identity));
}

// ---------------------------------------------------------------------------
// 4. fusion quality orderings on the synthetic task (seed-median dev CER)

double median_of(const AblateResult& r, const std::string& variant) {
  for (const auto& [name, med] : r.medians)
    if (name == variant) return med;
  throw VerificationError("ablate grid missing variant " + variant);
}

void criterion_fusion_orderings(const std::string& data_dir) {
  RunConfig cfg = preset_config("desk");
  // 8000 steps: the attention decoders of the cross-attention variants
  // converge markedly later than the position-wise baselines; at 2000 steps
  // every variant is still dominated by undertraining noise
  cfg.train.steps = 8000;
  cfg.eval_beam = 2;  // dev scoring only; ranking is beam-insensitive here
  std::string summary;
  const AblateResult r = cmd_ablate(cfg, data_dir, (work_dir() / "ablate").string(),
                                    {1, 2, 3}, 1, &summary);
  const double asr = median_of(r, "asr");
  const double vsr = median_of(r, "vsr");
  const double mlca = median_of(r, "mlca-111");
  const double ca3 = median_of(r, "mlca-001");
  const double add = median_of(r, "add");
  const double mlp = median_of(r, "mlp");
  char detail[256];
  std::snprintf(detail, sizeof(detail),
                "median dev CER: asr=%.4f vsr=%.4f mlca-111=%.4f mlca-001=%.4f add=%.4f "
                "mlp=%.4f",
                asr, vsr, mlca, ca3, add, mlp);
  const bool av_beats_single = mlca < asr && mlca < vsr;
  const bool mlca_beats_baselines = mlca <= add && mlca <= mlp;
  const bool layered_helps = mlca <= ca3;
  report(4,
         "fusion orderings hold (3 seeds, 8000 steps): avsr < asr,vsr; mlca <= add,mlp; "
         "full mlca <= final-module-only",
         av_beats_single && mlca_beats_baselines && layered_helps, detail);
}

// ---------------------------------------------------------------------------
// 5. parameter-count ordering across enabled module sets

void criterion_param_counts() {
  ModelConfig base;  // desk defaults, avsr/mlca
  auto with = [&](bool c1, bool c2, bool c3) {
    ModelConfig c = base;
    c.ca_enabled = {c1, c2, c3};
    return count_params(c);
  };
  const auto p001 = with(false, false, true);
  const auto p011 = with(false, true, true);
  const auto p101 = with(true, false, true);
  const auto p111 = with(true, true, true);
  char detail[160];
  std::snprintf(detail, sizeof(detail), "(0,0,1)=%lld (0,1,1)=%lld (1,0,1)=%lld (1,1,1)=%lld",
                (long long)p001, (long long)p011, (long long)p101, (long long)p111);
  report(5, "parameter counts ordered: (0,0,1) < (0,1,1) == (1,0,1) < (1,1,1)",
         p001 < p011 && p011 == p101 && p011 < p111, detail);
}

// ---------------------------------------------------------------------------
// 6. cpCER equals a brute-force permutation search

void criterion_cp_cer() {
  Rng rng(606);
  int cases = 0;
  bool ok = true;
  auto rand_str = [&](int max_len) {
    std::string s;
    const int n = rng.randint(max_len + 1);
    for (int i = 0; i < n; ++i) s.push_back(char('a' + rng.randint(4)));
    return s;
  };
  while (cases < 100) {
    const int k = 1 + rng.randint(4);
    SessionTranscripts s;
    s.session = "acc";
    std::int64_t ref_len = 0;
    for (int i = 0; i < k; ++i) {
      s.refs.push_back(rand_str(8));
      s.hyps.push_back(rand_str(8));
      ref_len += (std::int64_t)s.refs.back().size();
    }
    if (ref_len == 0) continue;
    std::vector<int> perm(k);
    std::iota(perm.begin(), perm.end(), 0);
    std::int64_t best = -1;
    do {
      std::int64_t d = 0;
      for (int i = 0; i < k; ++i) d += edit_distance(s.refs[i], s.hyps[perm[i]]);
      if (best < 0 || d < best) best = d;
    } while (std::next_permutation(perm.begin(), perm.end()));
    const CpCerResult r = cp_cer({s});
    if (r.total_distance != best || r.total_ref_len != ref_len) ok = false;
    ++cases;
  }
  report(6, "cpCER equals brute-force assignment search (100 sessions, <=4 speakers)", ok,
         "cases=" + std::to_string(cases));
}

// ---------------------------------------------------------------------------
// 7. bitwise training determinism and checkpoint resume

bool params_equal(const AvsrModel& a, const AvsrModel& b) {
  if (a.params.all().size() != b.params.all().size()) return false;
  for (std::size_t i = 0; i < a.params.all().size(); ++i)
    if (a.params.all()[i].second.data() != b.params.all()[i].second.data()) return false;
  return true;
}

void criterion_determinism(const Corpus& corpus) {
  ModelConfig mcfg;  // desk geometry
  mcfg.mode = Modality::kAvsr;
  mcfg.seed = 7;
  mcfg.vocab = corpus.cfg.vocab;
  mcfg.audio_feats = corpus.cfg.audio_feats;
  mcfg.patch = corpus.cfg.patch;
  TrainOptions opt;
  opt.steps = 20;
  opt.batch_size = 8;
  opt.warmup = 10;

  AvsrModel m1(mcfg), m2(mcfg);
  const TrainResult r1 = Trainer(m1, opt).run(corpus.train, corpus.cfg);
  const TrainResult r2 = Trainer(m2, opt).run(corpus.train, corpus.cfg);
  const bool replay_ok = r1.loss_trace == r2.loss_trace && params_equal(m1, m2);

  // interrupt at step 12, checkpoint with optimizer state, resume to 20
  AvsrModel part(mcfg);
  TrainOptions half = opt;
  half.steps = 12;
  Trainer t1(part, half);
  const TrainResult rp = t1.run(corpus.train, corpus.cfg);
  const std::string ckpt_path = (work_dir() / "resume_ckpt.bin").string();
  save_checkpoint(ckpt_path, part, rp.final_step, &t1.adam_m(), &t1.adam_v());
  const Checkpoint ckpt = Checkpoint::load(ckpt_path);
  AvsrModel resumed = model_from_checkpoint(ckpt);
  Trainer t2(resumed, opt);
  t2.restore_optimizer(ckpt);
  const TrainResult rr = t2.run(corpus.train, corpus.cfg, ckpt.step);
  bool resume_ok = rr.final_step == r1.final_step && rr.loss_trace.size() == 8;
  for (std::size_t i = 0; resume_ok && i < rr.loss_trace.size(); ++i)
    resume_ok = rr.loss_trace[i] == r1.loss_trace[12 + i];
  resume_ok = resume_ok && params_equal(m1, resumed);

  report(7, "training is bitwise deterministic and resume replays the schedule exactly",
         replay_ok && resume_ok,
         std::string("replay=") + (replay_ok ? "ok" : "MISMATCH") +
             " resume=" + (resume_ok ? "ok" : "MISMATCH"));
}

// ---------------------------------------------------------------------------
// 8. pretrain-then-fuse starts as an exact no-op on the audio branch

void criterion_pretrain_noop(const Corpus& corpus) {
  TrainOptions opt;
  opt.steps = 10;
  opt.batch_size = 8;
  opt.warmup = 10;

  ModelConfig asr_cfg;
  asr_cfg.mode = Modality::kAsr;
  asr_cfg.seed = 8;
  asr_cfg.vocab = corpus.cfg.vocab;
  asr_cfg.audio_feats = corpus.cfg.audio_feats;
  asr_cfg.patch = corpus.cfg.patch;
  ModelConfig vsr_cfg = asr_cfg;
  vsr_cfg.mode = Modality::kVsr;
  vsr_cfg.seed = 9;

  AvsrModel asr(asr_cfg), vsr(vsr_cfg);
  Trainer(asr, opt).run(corpus.train, corpus.cfg);
  Trainer(vsr, opt).run(corpus.train, corpus.cfg);
  const std::string asr_path = (work_dir() / "asr_ckpt.bin").string();
  const std::string vsr_path = (work_dir() / "vsr_ckpt.bin").string();
  save_checkpoint(asr_path, asr, opt.steps, nullptr, nullptr);
  save_checkpoint(vsr_path, vsr, opt.steps, nullptr, nullptr);

  ModelConfig avsr_cfg = asr_cfg;
  avsr_cfg.mode = Modality::kAvsr;
  const AvsrModel fused =
      init_from_pretrained(avsr_cfg, Checkpoint::load(asr_path), Checkpoint::load(vsr_path));

  Batch batch = assemble_batch(corpus.dev, {0, 1, 2, 3}, corpus.cfg);
  FusionOutput fo;
  fused.encode(batch, fused.make_ctx(false, 0), &fo);
  const FeatureSeq asr_out = asr.encode(batch, asr.make_ctx(false, 0), nullptr);
  const FeatureSeq vsr_out = vsr.encode(batch, vsr.make_ctx(false, 0), nullptr);
  const bool audio_ok = fo.audio_final.values.data() == asr_out.values.data();
  const bool video_ok = fo.visual_final.values.data() == vsr_out.values.data();
  report(8, "pretrained init starts as a no-op: fused audio branch equals the asr encoder "
            "bitwise",
         audio_ok && video_ok,
         std::string("audio=") + (audio_ok ? "bitwise-equal" : "MISMATCH") +
             " video=" + (video_ok ? "bitwise-equal" : "MISMATCH"));
}

}  // namespace

int main() {
  try {
    criterion_gradients();
    criterion_ctc_oracle();
    criterion_fusion_chain();

    // shared corpus for the training-based criteria
    const fs::path data_dir = work_dir() / "data";
    fs::create_directories(data_dir);
    CorpusConfig ccfg;  // full desk corpus: 2000 train / 200 dev / 200 eval
    ccfg.seed = 1;
    generate_corpus(ccfg, data_dir.string());
    const Corpus corpus = load_corpus(data_dir.string());

    criterion_fusion_orderings(data_dir.string());
    criterion_param_counts();
    criterion_cp_cer();
    criterion_determinism(corpus);
    criterion_pretrain_noop(corpus);
  } catch (const std::exception& e) {
    std::printf("FAIL acceptance suite aborted: %s\n", e.what());
    return 1;
  }
  std::printf("%s\n", g_failures == 0 ? "acceptance: all criteria passed"
                                      : "acceptance: FAILURES PRESENT");
  return g_failures == 0 ? 0 : 1;
}
