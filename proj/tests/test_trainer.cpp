#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <iterator>

#include "smdris/trainer.hpp"
#include "test_util.hpp"

using namespace smdris;

namespace {

fs::path fresh_dir(const std::string& name) {
  const char* env = std::getenv("SMDRIS_TEST_TMP");
  const fs::path base = env ? fs::path(env) : fs::temp_directory_path() / "smdris_test_trainer";
  const fs::path p = base / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

const PairedImages& tiny_data() {
  static const PairedImages data = [] {
    const fs::path root = fresh_dir("data");
    emit_synthetic_dataset(3, 48, 7, root);
    return load_paired(root);
  }();
  return data;
}

TrainConfig tiny(int iterations) {
  TrainConfig c = TrainConfig::desk();
  c.model.base_channels = 4;
  c.batch_size = 2;
  c.crop = 32;
  c.iterations = iterations;
  c.seed = 11;
  c.model.init_seed = 11;
  return c;
}

bool same_params(const Model& a, const Model& b) {
  const auto& ea = a.params().entries();
  const auto& eb = b.params().entries();
  if (ea.size() != eb.size()) return false;
  for (std::size_t i = 0; i < ea.size(); ++i) {
    if (ea[i].name != eb[i].name || max_abs_diff(ea[i].var.value(), eb[i].var.value()) != 0.0) return false;
  }
  return true;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

}  // namespace

TEST_CASE("profiles carry the documented hyperparameters") {
  const TrainConfig paper = TrainConfig::paper();
  CHECK(paper.batch_size == 44);
  CHECK(paper.crop == 256);
  CHECK(paper.lr == doctest::Approx(2e-4));
  CHECK(paper.model.stages == 4);
  const TrainConfig desk = TrainConfig::desk();
  CHECK(desk.crop == 64);
  CHECK(desk.iterations == 500);
  CHECK(desk.model.base_channels == 8);
  CHECK(TrainConfig::for_profile("paper").to_text() == paper.to_text());
  CHECK_THROWS_AS(TrainConfig::for_profile("huge"), std::invalid_argument);
}

TEST_CASE("train config text round-trips and rejects unknown keys") {
  TrainConfig c = tiny(9);
  c.loss.perceptual = false;
  c.model.enable_asisf_de = false;
  const TrainConfig back = TrainConfig::from_text(c.to_text());
  CHECK(back.to_text() == c.to_text());
  CHECK(TrainConfig::from_text("profile = paper\ncrop = 128\n").batch_size == 44);
  CHECK_THROWS_AS(TrainConfig::from_text("learning_rate = 0.1\n"), std::invalid_argument);
  CHECK_THROWS_AS(TrainConfig::from_text("crop = 30\n"), std::invalid_argument);
  CHECK_THROWS_AS(TrainConfig::from_text("crop = 16\n"), std::invalid_argument);
  CHECK_NOTHROW(TrainConfig::from_text("crop = 16\nenable_pre = false\n"));
  CHECK_THROWS_AS(TrainConfig::from_text("enable_l1 = false\nenable_pre = false\nenable_mse = false\n"),
                  std::invalid_argument);

  TrainConfig d = TrainConfig::desk();
  d.apply({{"base_channels", "4"}});
  CHECK(d.model.width(0) == 4);
  CHECK(d.model.width(3) == 32);
}

TEST_CASE("config diff names changed keys and skips bookkeeping on request") {
  const TrainConfig a = tiny(5);
  TrainConfig b = a;
  b.iterations = 50;
  b.lr = 1e-3;
  const std::string full = config_diff(a, b, false);
  CHECK(full.find("iterations: 5 -> 50") != std::string::npos);
  CHECK(full.find("lr: ") != std::string::npos);
  const std::string resumable = config_diff(a, b, true);
  CHECK(resumable.find("iterations") == std::string::npos);
  CHECK(resumable.find("lr: ") != std::string::npos);
  CHECK(config_diff(a, a, false).empty());
}

TEST_CASE("batches are a pure function of seed and iteration") {
  const TrainConfig c = tiny(4);
  const auto [r1, f1] = sample_batch(c, tiny_data(), 3);
  const auto [r2, f2] = sample_batch(c, tiny_data(), 3);
  CHECK(r1.shape() == Shape{2, 3, 32, 32});
  CHECK(max_abs_diff(r1, r2) == 0.0);
  CHECK(max_abs_diff(f1, f2) == 0.0);
  const auto [r3, f3] = sample_batch(c, tiny_data(), 4);
  CHECK(max_abs_diff(r1, r3) > 0.0);
}

TEST_CASE("training is deterministic and writes logs and checkpoints") {
  TrainConfig c = tiny(4);
  c.checkpoint_dir = fresh_dir("det_a");
  c.eval_every = 2;
  const TrainResult a = train(c, tiny_data());
  TrainConfig c2 = c;
  c2.checkpoint_dir = fresh_dir("det_b");
  const TrainResult b = train(c2, tiny_data());
  REQUIRE(a.log.size() == 4);
  CHECK(a.log.front().iteration == 1);
  for (std::size_t i = 0; i < a.log.size(); ++i) CHECK(a.log[i].loss.total == b.log[i].loss.total);
  CHECK(same_params(a.model, b.model));
  for (const TrainLogRecord& r : a.log) CHECK(r.loss.consistent());
  CHECK(fs::exists(c.checkpoint_dir / "latest.ckpt"));
  CHECK(fs::exists(a.final_checkpoint));

  std::ifstream log(c.checkpoint_dir / "train_log.jsonl");
  int lines = 0;
  for (std::string l; std::getline(log, l);) ++lines;
  CHECK(lines == 4);

  const Model reloaded = load_model(a.final_checkpoint);
  CHECK(same_params(reloaded, a.model));
  CHECK(stored_config(read_checkpoint(a.final_checkpoint)).to_text() == c.to_text());
}

TEST_CASE("resuming continues the identical trajectory") {
  TrainConfig full = tiny(6);
  const TrainResult reference = train(full, tiny_data());

  TrainConfig first = tiny(3);
  first.checkpoint_dir = fresh_dir("resume_a");
  const TrainResult half = train(first, tiny_data());

  TrainConfig rest = tiny(6);
  rest.checkpoint_dir = fresh_dir("resume_b");
  const TrainResult resumed = resume(half.final_checkpoint, rest, tiny_data());
  REQUIRE(resumed.log.size() == 3);
  CHECK(resumed.log.front().iteration == 4);
  for (std::size_t i = 0; i < 3; ++i) CHECK(resumed.log[i].loss.total == reference.log[3 + i].loss.total);
  CHECK(same_params(resumed.model, reference.model));

  TrainConfig incompatible = rest;
  incompatible.lr = 1e-3;
  try {
    resume(half.final_checkpoint, incompatible, tiny_data());
    FAIL("expected a refusal");
  } catch (const CheckpointError& e) {
    CHECK(std::string(e.what()).find("lr: ") != std::string::npos);
  }
}

TEST_CASE("corrupt training archives are refused") {
  TrainConfig c = tiny(1);
  c.checkpoint_dir = fresh_dir("corrupt");
  const TrainResult r = train(c, tiny_data());
  std::string bytes = slurp(r.final_checkpoint);
  bytes[bytes.size() / 2] = static_cast<char>(bytes[bytes.size() / 2] ^ 0x11);
  const fs::path bad = c.checkpoint_dir / "bad.ckpt";
  std::ofstream(bad, std::ios::binary) << bytes;
  CHECK_THROWS_AS(resume(bad, tiny(2), tiny_data()), CheckpointError);
  std::ofstream(c.checkpoint_dir / "short.ckpt", std::ios::binary) << bytes.substr(0, 40);
  CHECK_THROWS_AS(load_model(c.checkpoint_dir / "short.ckpt"), CheckpointError);
}

TEST_CASE("a diverging run aborts with a logged record") {
  TrainConfig c = tiny(5);
  c.lr = 1e300;
  c.checkpoint_dir = fresh_dir("diverge");
  CHECK_THROWS_AS(train(c, tiny_data()), TrainingAborted);
  const std::string log = slurp(c.checkpoint_dir / "train_log.jsonl");
  CHECK(log.find("aborted") != std::string::npos);
}

TEST_CASE("disabled loss terms stay at zero during training") {
  TrainConfig c = tiny(2);
  c.loss.perceptual = false;
  const TrainResult r = train(c, tiny_data());
  for (const TrainLogRecord& rec : r.log) {
    for (const StageLoss& s : rec.loss.per_stage) CHECK(s.perceptual == 0.0);
  }
}

TEST_CASE("evaluation of an identity model on identical pairs") {
  const fs::path root = fresh_dir("eval");
  fs::create_directories(root / "raw");
  fs::create_directories(root / "reference");
  for (int i = 0; i < 2; ++i) {
    const Tensor img = procedural_image(48, 100 + i);
    save_image(img, root / "raw" / ("p" + std::to_string(i) + ".png"));
    save_image(img, root / "reference" / ("p" + std::to_string(i) + ".png"));
  }
  std::ofstream(root / "raw" / "broken.png") << "junk";
  std::ofstream(root / "reference" / "broken.png") << "junk";
  ModelConfig mc;
  mc.base_channels = 4;
  mc.identity_heads = true;
  const Model model(mc);
  std::vector<std::string> warnings;
  const EvalTable t = evaluate(model, root, {}, &warnings);
  REQUIRE(t.rows.size() == 2);
  CHECK(t.skipped == 1);
  CHECK(warnings.size() == 1);
  for (const EvalRow& row : t.rows) {
    CHECK(*row.metrics.get("PSNR") == kPsnrCap);
    CHECK(*row.metrics.get("SSIM") == doctest::Approx(1.0));
  }

  EvalOptions unpaired;
  unpaired.paired = false;
  const EvalTable u = evaluate(model, root / "raw", unpaired);
  REQUIRE(u.rows.size() == 2);
  CHECK_FALSE(u.rows[0].metrics.get("PSNR").has_value());
  CHECK(u.rows[0].metrics.get("CEIQ").has_value());
}

TEST_CASE("ablation matrices enumerate the table rows with the full model last") {
  const TrainConfig base = tiny(1);
  const auto stages = ablation_rows(base, AblationMatrix::stages);
  REQUIRE(stages.size() == 4);
  for (int i = 0; i < 4; ++i) CHECK(stages[static_cast<std::size_t>(i)].config.model.stages == i + 1);

  const auto bica = ablation_rows(base, AblationMatrix::bica);
  REQUIRE(bica.size() == 5);
  CHECK(bica.back().label == "CA=1 PA=1 ReGIA=1 HCAFE=1");
  int disabled = 0;
  for (std::size_t i = 0; i + 1 < bica.size(); ++i) {
    const ModelConfig& m = bica[i].config.model;
    disabled += !m.enable_cfa_ca + !m.enable_cfa_pa + !m.enable_regia + !m.enable_hcafe;
  }
  CHECK(disabled == 4);

  const auto asisf = ablation_rows(base, AblationMatrix::asisf);
  REQUIRE(asisf.size() == 4);
  for (std::size_t i = 0; i < 3; ++i) {
    const ModelConfig& m = asisf[i].config.model;
    CHECK(!m.enable_asisf_en + !m.enable_asisf_en_to_de + !m.enable_asisf_de == 1);
  }
  CHECK_FALSE(asisf[0].config.model.enable_asisf_en);
  CHECK_FALSE(asisf[1].config.model.enable_asisf_en_to_de);
  CHECK_FALSE(asisf[2].config.model.enable_asisf_de);

  const auto loss = ablation_rows(base, AblationMatrix::loss);
  REQUIRE(loss.size() == 4);
  CHECK(loss.back().config.loss.l1);
  CHECK(loss.back().config.loss.perceptual);
  CHECK(loss.back().config.loss.mse);

  for (const char* n : {"stages", "bica", "asisf", "loss"}) {
    CHECK(std::string(ablation_matrix_name(parse_ablation_matrix(n))) == n);
  }
  CHECK_THROWS_AS(parse_ablation_matrix("width"), std::invalid_argument);
}

TEST_CASE("an ablation run fills every row") {
  const TrainConfig base = tiny(1);
  const AblationTable t = run_ablation_matrix(base, AblationMatrix::asisf, tiny_data(), tiny_data());
  REQUIRE(t.rows.size() == 4);
  for (const AblationRow& r : t.rows) {
    CHECK(std::isfinite(r.final_loss));
    CHECK(r.psnr > 0.0);
    CHECK(r.all == doctest::Approx(r.psnr + r.ssim));
  }
  CHECK(t.rows.front().parameters < t.rows.back().parameters);
  const fs::path csv = fresh_dir("ablate") / "asisf.csv";
  t.write_csv(csv);
  CHECK(slurp(csv).rfind("matrix,row,PSNR", 0) == 0);
}
