#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include <mlca/c_api.h>

namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  fs::path d = fs::temp_directory_path() / ("mlca_capi_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

// small corpus + tiny model so end-to-end calls stay fast
void shrink(mlca_run* run) {
  const char* overrides[] = {
      "corpus.train_utts=32", "corpus.dev_utts=8",  "corpus.eval_utts=8", "corpus.l_max=6",
      "model.dim=16",         "model.heads=2",      "model.n_ea=3",       "model.n_ev=3",
      "model.dec_layers=1",   "model.ff_dim=24",    "model.mlp_hidden=24",
      "train.steps=4",        "train.batch_size=8", "train.warmup=10",    "eval.batch_size=8",
      "eval.beam=2",
  };
  for (const char* o : overrides) REQUIRE(mlca_run_set(run, o) == MLCA_OK);
}

}  // namespace

TEST_CASE("run handles: create, override, destroy, input validation") {
  mlca_run* run = nullptr;
  CHECK(mlca_run_create("desk", nullptr, &run) == MLCA_OK);
  REQUIRE(run);
  CHECK(mlca_run_set(run, "model.fusion=add") == MLCA_OK);
  CHECK(mlca_run_set(run, "model.fusion=banana") == MLCA_ERR_USAGE);
  CHECK(std::strlen(mlca_last_error()) > 0);
  CHECK(mlca_run_set(run, "nosuch.key=1") == MLCA_ERR_USAGE);
  CHECK(mlca_run_set(run, "not-an-override") == MLCA_ERR_USAGE);
  CHECK(mlca_run_set(nullptr, "model.dim=16") == MLCA_ERR_USAGE);
  mlca_run_destroy(run);

  mlca_run* bad = nullptr;
  CHECK(mlca_run_create("nosuch-preset", nullptr, &bad) == MLCA_ERR_USAGE);
  CHECK(bad == nullptr);
  CHECK(mlca_run_create("desk", "/nonexistent/config.ini", &bad) == MLCA_ERR_USAGE);
  CHECK(mlca_run_create("desk", nullptr, nullptr) == MLCA_ERR_USAGE);
}

TEST_CASE("config files layer on top of the preset") {
  fs::path dir = fresh_dir("cfg");
  std::ofstream f(dir / "run.ini");
  f << "# comment\n[model]\ndim = 32\n[train]\nsteps = 7\n";
  f.close();
  mlca_run* run = nullptr;
  REQUIRE(mlca_run_create("desk", (dir / "run.ini").string().c_str(), &run) == MLCA_OK);
  mlca_run_destroy(run);

  std::ofstream g(dir / "bad.ini");
  g << "[model]\nno_such_key = 1\n";
  g.close();
  mlca_run* bad = nullptr;
  CHECK(mlca_run_create("desk", (dir / "bad.ini").string().c_str(), &bad) == MLCA_ERR_USAGE);
  CHECK(std::string(mlca_last_error()).find("no_such_key") != std::string::npos);
}

TEST_CASE("synth-data, train, eval, decode through the C surface") {
  fs::path data = fresh_dir("data");
  fs::path out = fresh_dir("out");
  mlca_run* run = nullptr;
  REQUIRE(mlca_run_create("desk", nullptr, &run) == MLCA_OK);
  shrink(run);
  REQUIRE(mlca_run_set(run, "model.mode=asr") == MLCA_OK);

  CHECK(mlca_run_synth_data(run, data.string().c_str()) == MLCA_OK);
  CHECK(fs::exists(data / "train.jsonl"));
  CHECK(fs::exists(data / "eval.bin"));

  CHECK(mlca_run_train(run, data.string().c_str(), out.string().c_str(), nullptr, nullptr,
                       nullptr, 0, 0) == MLCA_OK);
  CHECK(fs::exists(out / "ckpt.bin"));
  CHECK(fs::exists(out / "metrics.jsonl"));
  CHECK(fs::exists(out / "eval.json"));
  CHECK(std::strlen(mlca_last_output()) > 0);

  const std::string ckpt = (out / "ckpt.bin").string();
  fs::path out2 = fresh_dir("out2");
  CHECK(mlca_run_eval(run, ckpt.c_str(), data.string().c_str(), "dev", 2, 8,
                      out2.string().c_str()) == MLCA_OK);
  CHECK(fs::exists(out2 / "eval.json"));
  CHECK(mlca_run_decode(run, ckpt.c_str(), data.string().c_str(), "dev", 2, 8,
                        out2.string().c_str()) == MLCA_OK);
  CHECK(fs::exists(out2 / "hyps.jsonl"));

  // usage errors propagate as MLCA_ERR_USAGE
  CHECK(mlca_run_eval(run, "/nonexistent/ckpt.bin", data.string().c_str(), "dev", 2, 8,
                      out2.string().c_str()) == MLCA_ERR_USAGE);
  CHECK(mlca_run_eval(run, ckpt.c_str(), data.string().c_str(), "nosuch-split", 2, 8,
                      out2.string().c_str()) == MLCA_ERR_USAGE);
  CHECK(mlca_run_train(run, "/nonexistent/data", out.string().c_str(), nullptr, nullptr, nullptr,
                       0, 0) == MLCA_ERR_USAGE);
  // pretrained init requires both checkpoints
  CHECK(mlca_run_train(run, data.string().c_str(), out.string().c_str(), nullptr, ckpt.c_str(),
                       nullptr, 0, 0) == MLCA_ERR_USAGE);
  mlca_run_destroy(run);
}

TEST_CASE("the oversized preset is refused without allow_large") {
  fs::path data = fresh_dir("large_data");
  fs::path out = fresh_dir("large_out");
  mlca_run* run = nullptr;
  REQUIRE(mlca_run_create("desk", nullptr, &run) == MLCA_OK);
  shrink(run);
  REQUIRE(mlca_run_synth_data(run, data.string().c_str()) == MLCA_OK);
  mlca_run_destroy(run);

  REQUIRE(mlca_run_create("paper-shape", nullptr, &run) == MLCA_OK);
  shrink(run);  // shrink corpus/train but keep the large model geometry
  REQUIRE(mlca_run_set(run, "model.dim=256") == MLCA_OK);
  REQUIRE(mlca_run_set(run, "model.heads=4") == MLCA_OK);
  REQUIRE(mlca_run_set(run, "model.n_ea=24") == MLCA_OK);
  REQUIRE(mlca_run_set(run, "model.n_ev=9") == MLCA_OK);
  REQUIRE(mlca_run_set(run, "model.dec_layers=6") == MLCA_OK);
  REQUIRE(mlca_run_set(run, "model.ff_dim=2048") == MLCA_OK);
  CHECK(mlca_run_train(run, data.string().c_str(), out.string().c_str(), nullptr, nullptr,
                       nullptr, 0, 0) == MLCA_ERR_USAGE);
  CHECK(std::string(mlca_last_error()).find("allow") != std::string::npos);
  mlca_run_destroy(run);
}

TEST_CASE("verification entry points run through the C surface") {
  CHECK(mlca_gradcheck(1, 12) == MLCA_OK);
  CHECK(std::string(mlca_last_output()).find("gradcheck") != std::string::npos);
  CHECK(mlca_ctc_oracle(25, 12) == MLCA_OK);
  CHECK(std::string(mlca_last_output()).find("ctc-oracle") != std::string::npos);
  CHECK(mlca_gradcheck(0, 12) == MLCA_ERR_USAGE);
  CHECK(mlca_ctc_oracle(-1, 12) == MLCA_ERR_USAGE);
}
