#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sstream>

#include "smdris/cli.hpp"
#include "smdris/data_io.hpp"
#include "smdris/network.hpp"

using namespace smdris;

namespace {

fs::path fresh_dir(const std::string& name) {
  const char* env = std::getenv("SMDRIS_TEST_TMP");
  const fs::path base = env ? fs::path(env) : fs::temp_directory_path() / "smdris_test_cli";
  const fs::path p = base / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

bool dir_empty(const fs::path& p) { return fs::is_empty(p); }

const std::vector<std::string> kTinyModel = {"--set", "base_channels=4", "--batch", "2", "--crop", "32"};

}  // namespace

TEST_CASE("usage errors exit 2 and write nothing") {
  const fs::path out = fresh_dir("usage");
  CHECK(cli({"train", "--bogus", "1", "--out", out.string()}).code == kExitUsage);
  CHECK(dir_empty(out));
  CHECK(cli({}).code == kExitUsage);
  CHECK(cli({"frobnicate"}).code == kExitUsage);
  CHECK(cli({"train", "--set", "no_such_key=3", "--dry-run"}).code == kExitUsage);
  CHECK(cli({"train", "--profile", "huge", "--dry-run"}).code == kExitUsage);
  CHECK(cli({"ablate", "--matrix", "bogus", "--out", out.string()}).code == kExitUsage);
  CHECK(dir_empty(out));

  const Run bad_size = cli({"synth", "--n", "2", "--size", "70", "--out", (out / "s").string()});
  CHECK(bad_size.code == kExitUsage);
  CHECK(bad_size.err.find("multiple of 24") != std::string::npos);
  CHECK_FALSE(fs::exists(out / "s"));
}

TEST_CASE("dry run shows the resolved profile") {
  const Run paper = cli({"train", "--profile", "paper", "--dry-run"});
  REQUIRE(paper.code == kExitOk);
  CHECK(paper.out.find("batch_size = 44") != std::string::npos);
  CHECK(paper.out.find("crop = 256") != std::string::npos);
  CHECK(paper.out.find("lr = 0.0002") != std::string::npos);

  const fs::path dir = fresh_dir("dry");
  std::ofstream(dir / "cfg.txt") << "profile = paper\ncrop = 128\nbatch_size = 8\n";
  const Run layered =
      cli({"train", "--config", (dir / "cfg.txt").string(), "--set", "batch_size=6", "--seed", "9", "--dry-run"});
  REQUIRE(layered.code == kExitOk);
  CHECK(layered.out.find("crop = 128") != std::string::npos);
  CHECK(layered.out.find("batch_size = 6") != std::string::npos);
  CHECK(layered.out.find("init_seed = 9") != std::string::npos);
}

TEST_CASE("describe totals match the model accounting") {
  const Run r = cli({"describe", "--base-channels", "4"});
  REQUIRE(r.code == kExitOk);
  ModelConfig mc;
  mc.base_channels = 4;
  const Model m(mc);
  CHECK(r.out.find("total " + std::to_string(m.params().total_count())) != std::string::npos);
}

TEST_CASE("synth is deterministic") {
  const fs::path a = fresh_dir("synth_a"), b = fresh_dir("synth_b");
  REQUIRE(cli({"synth", "--n", "3", "--size", "48", "--seed", "3", "--out", a.string()}).code == kExitOk);
  REQUIRE(cli({"synth", "--n", "3", "--size", "48", "--seed", "3", "--out", b.string()}).code == kExitOk);
  CHECK(scan_paired(a).pairs.size() == 3);
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    CHECK(slurp(e.path()) == slurp(b / fs::relative(e.path(), a)));
  }
}

TEST_CASE("train, infer and eval end to end") {
  const fs::path root = fresh_dir("e2e");
  REQUIRE(cli({"synth", "--n", "3", "--size", "48", "--seed", "5", "--out", (root / "data").string()}).code == kExitOk);

  std::vector<std::string> train = {"train", "--data", (root / "data").string(), "--iters", "2", "--out",
                                    (root / "run").string(), "--seed", "4"};
  train.insert(train.end(), kTinyModel.begin(), kTinyModel.end());
  const Run t = cli(train);
  REQUIRE_MESSAGE(t.code == kExitOk, t.err);
  CHECK(fs::exists(root / "run" / "final.ckpt"));
  CHECK(fs::exists(root / "run" / "train_log.jsonl"));
  const std::string ckpt = (root / "run" / "final.ckpt").string();

  std::vector<std::string> more = train;
  more[4] = "3";
  more.push_back("--resume");
  more.push_back(ckpt);
  const Run resumed = cli(more);
  CHECK_MESSAGE(resumed.code == kExitOk, resumed.err);

  fs::create_directories(root / "in");
  save_image(procedural_image(48, 1), root / "in" / "a.png");
  save_image(Tensor({1, 3, 250, 250}, 0.3), root / "in" / "b.png");
  save_image(Tensor({1, 3, 7, 13}, 0.6), root / "in" / "c.png");
  const Run inf = cli({"infer", "--checkpoint", ckpt, "--input", (root / "in").string(), "--output",
                       (root / "restored").string()});
  REQUIRE_MESSAGE(inf.code == kExitOk, inf.err);
  CHECK(load_image(root / "restored" / "b.png").shape() == Shape{1, 3, 250, 250});
  CHECK(load_image(root / "restored" / "c.png").shape() == Shape{1, 3, 7, 13});
  CHECK(fs::exists(root / "restored" / "a.png"));

  fs::create_directories(root / "junk");
  std::ofstream(root / "junk" / "x.png") << "junk";
  const Run all_bad = cli({"infer", "--checkpoint", ckpt, "--input", (root / "junk").string(), "--output",
                           (root / "junk_out").string()});
  CHECK(all_bad.code == kExitFailure);
  CHECK(all_bad.err.find("warning") != std::string::npos);
  CHECK(cli({"infer", "--checkpoint", (root / "missing.ckpt").string(), "--input", (root / "in").string(),
             "--output", (root / "x").string()})
            .code == kExitFailure);

  const Run ev = cli({"eval", "--checkpoint", ckpt, "--data", (root / "data").string(), "--paper-compat", "--out",
                      (root / "report").string()});
  REQUIRE_MESSAGE(ev.code == kExitOk, ev.err);
  std::ifstream csv(root / "report" / "report.csv");
  std::string directions, header;
  std::getline(csv, directions);
  std::getline(csv, header);
  CHECK(header == "id,PSNR,MSE,SSIM,UIQM,UCIQE,CCF,CEIQ,ALL,seconds");
  CHECK(fs::exists(root / "report" / "report.json"));

  const Run unpaired = cli({"eval", "--checkpoint", ckpt, "--data", (root / "data").string(), "--paired", "false",
                            "--out", (root / "report_np").string()});
  REQUIRE_MESSAGE(unpaired.code == kExitOk, unpaired.err);
  std::ifstream csv2(root / "report_np" / "report.csv");
  std::getline(csv2, directions);
  std::getline(csv2, header);
  CHECK(header == "id,UIQM,UCIQE,CCF,CEIQ,ALL,seconds");
}

TEST_CASE("ablate writes a summary with one row per configuration") {
  const fs::path root = fresh_dir("ablate");
  const Run r = cli({"ablate", "--matrix", "stages", "--iters", "1", "--set", "base_channels=4", "--set", "batch_size=2",
                     "--set", "crop=32", "--out", root.string()});
  REQUIRE_MESSAGE(r.code == kExitOk, r.err);
  std::ifstream csv(root / "ablation_stages.csv");
  int lines = 0;
  for (std::string l; std::getline(csv, l);) ++lines;
  CHECK(lines == 5);
}
