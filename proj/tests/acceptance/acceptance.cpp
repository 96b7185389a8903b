// Acceptance run: one PASS/FAIL line per criterion with the measured values
// and the pinned tolerance. Exit status is nonzero if any criterion fails.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "metric_fixtures.hpp"
#include "smdris/asisf.hpp"
#include "smdris/blocks.hpp"
#include "smdris/trainer.hpp"
#include "test_util.hpp"

using namespace smdris;
using namespace smdris::fixtures;
using testing::random_tensor;

namespace {

using Clock = std::chrono::steady_clock;

Real seconds_since(Clock::time_point t0) { return std::chrono::duration<Real>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Report {
 public:
  explicit Report(const fs::path& file) : file_(file) {}

  void run(int id, const std::string& title, const std::function<Outcome()>& body) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = body();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::ostringstream line;
    line << (o.pass ? "PASS" : "FAIL") << " [" << id << "] " << title << ": " << o.detail << " ("
         << std::fixed << std::setprecision(1) << seconds_since(t0) << " s)";
    std::cout << line.str() << std::endl;
    file_ << line.str() << '\n';
    file_.flush();
    failures_ += !o.pass;
  }

  int failures() const { return failures_; }

 private:
  std::ofstream file_;
  int failures_ = 0;
};

std::string fmt(Real v, int precision = 6) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

fs::path fresh(const fs::path& p) {
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// 1 -------------------------------------------------------------------------

Outcome composite_arithmetic() {
  MetricReport r;
  const std::vector<std::pair<const char*, Real>> row = {
      {"PSNR", 23.710}, {"MSE", 0.075},   {"SSIM", 0.922},  {"VSI", 0.983},    {"FSIM", 0.967},
      {"FSIMc", 0.957}, {"UIQM", 3.015},  {"UCIQE", 0.607}, {"CCF", 26.012},   {"CEIQ", 3.369}};
  for (const auto& [name, v] : row) r.set(name, v);
  const Real all = all_score(r);
  const Real agg = aggregative(60.466, 0.0607);
  const bool ok = std::abs(all - 60.466) <= 0.01 && std::abs(agg - 60.4053) <= 1e-4;
  return {ok, "ALL " + fmt(all) + " (60.466 +/- 0.01), aggregative " + fmt(agg) + " (60.4053 +/- 1e-4)"};
}

// 2 -------------------------------------------------------------------------

Outcome shape_contract() {
  ModelConfig mc;
  mc.base_channels = 8;
  const Model model(mc);
  int checked = 0;
  std::string bad;
  std::vector<std::pair<int, int>> sizes;
  for (int s : {24, 48, 72, 96, 120, 240}) sizes.emplace_back(s, s);
  sizes.emplace_back(72, 120);
  for (auto [h, w] : sizes) {
    const RestorationOutput out = model.forward(build_input_pyramid(random_tensor({1, 3, h, w}, 1)));
    bool ok = out.outputs.size() == 4;
    for (std::size_t k = 0; ok && k < 4; ++k) ok = out.outputs[k].shape() == Shape{1, 3, h >> k, w >> k};
    if (!ok) bad += " forward " + std::to_string(h) + "x" + std::to_string(w);
    ++checked;
  }
  for (auto [h, w] : std::vector<std::pair<int, int>>{{1, 1}, {7, 13}, {250, 250}, {256, 256}}) {
    const Tensor out = model.infer_full(random_tensor({1, 3, h, w}, 2));
    if (!(out.shape() == Shape{1, 3, h, w}) || !out.all_finite()) {
      bad += " infer " + std::to_string(h) + "x" + std::to_string(w);
    }
    ++checked;
  }
  return {bad.empty(), std::to_string(checked) + " size cases" + (bad.empty() ? "" : ", mismatched:" + bad)};
}

// 3 -------------------------------------------------------------------------

Outcome gradient_coverage() {
  ModelConfig mc;
  mc.base_channels = 8;
  mc.init_seed = 3;
  Model model(mc);
  const RandomConvExtractor ext;
  const ScalePyramid inputs = build_input_pyramid(random_tensor({2, 3, 48, 48}, 4));
  const ScalePyramid targets = build_target_pyramid(random_tensor({2, 3, 48, 48}, 5));
  model.params().zero_grad();
  total_loss(model.forward_train(inputs), targets, ext).total.backward();
  std::size_t total = 0, finite = 0, nonzero = 0;
  for (const auto& e : model.params().entries()) {
    const Tensor& g = e.var.grad();
    total += e.var.value().numel();
    if (g.empty()) continue;
    for (Real v : g.values()) {
      finite += std::isfinite(v);
      nonzero += v != 0.0;
    }
  }
  const Real frac = static_cast<Real>(nonzero) / static_cast<Real>(total);
  return {finite == total && frac >= 0.99,
          std::to_string(finite) + "/" + std::to_string(total) + " finite, " + fmt(100.0 * frac, 5) +
              "% nonzero (need 100% finite, >= 99% nonzero)"};
}

// 4 -------------------------------------------------------------------------

Outcome residual_identities() {
  const Tensor t = random_tensor({1, 8, 12, 12}, 10, -1, 1);
  Real worst = 0.0;
  {
    ParamStore s(1);
    Cfa cfa(s, "cfa", 8);
    cfa.tail().zero();
    worst = std::max(worst, max_abs_diff(cfa(Var(t)).value(), t));
  }
  {
    ParamStore s(2);
    Hcafe h(s, "hcafe", 8);
    h.fuse().zero();
    worst = std::max(worst, max_abs_diff(h(Var(t)).value(), t));
  }
  for (int mask = 0; mask < 16; ++mask) {
    BlockOptions o;
    o.channel_attention = mask & 1;
    o.pixel_attention = mask & 2;
    o.regia = mask & 4;
    o.hcafe = mask & 8;
    ParamStore s(3);
    Bica b(s, "bica", 8, o);
    b.fuse().zero();
    worst = std::max(worst, max_abs_diff(b(Var(t)).value(), t));
  }
  {
    ParamStore s(4);
    Asisf a(s, "s", 8, 8, 8);
    a.force_gate(1e3);
    const Var in(t), ref(random_tensor({1, 8, 6, 6}, 11, -1, 1));
    worst = std::max(worst, max_abs_diff(a(in, ref).value(), a.project_input(in).value()));
  }
  return {worst == 0.0, "max deviation " + fmt(worst) + " over cfa, hcafe, 16 bica variants, open asisf (need 0)"};
}

// 5 -------------------------------------------------------------------------

Outcome loss_identities() {
  const RandomConvExtractor ext;
  Real worst = 0.0;
  bool flags_ok = true;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const ScalePyramid targets = build_target_pyramid(random_tensor({1, 3, 32, 32}, 2 * seed));
    std::vector<Tensor> outs;
    for (std::size_t k = 0; k < 4; ++k) outs.push_back(random_tensor(targets.levels[k].shape(), 1000 + 4 * seed + k));
    const LossReport r = total_loss(outs, targets, ext);
    Real sum = 0.0;
    for (const StageLoss& s : r.per_stage) {
      const Real want = s.l1 + kPerceptualWeight * s.perceptual + s.mse;
      worst = std::max(worst, std::abs(s.combined - want) / std::max(std::abs(want), 1e-300));
      sum += s.combined;
    }
    worst = std::max(worst, std::abs(r.total - sum) / std::max(std::abs(sum), 1e-300));

    for (const LossFlags f : {LossFlags{false, true, true}, LossFlags{true, false, true}, LossFlags{true, true, false}}) {
      for (const StageLoss& s : total_loss(outs, targets, ext, f).per_stage) {
        if (!f.l1 && s.l1 != 0.0) flags_ok = false;
        if (!f.perceptual && s.perceptual != 0.0) flags_ok = false;
        if (!f.mse && s.mse != 0.0) flags_ok = false;
      }
    }
  }
  return {worst <= 1e-6 && flags_ok, "worst relative deviation " + fmt(worst) + " on 100 pairs (need <= 1e-6); disabled terms " +
                                         (flags_ok ? "exactly 0" : "NONZERO")};
}

// 6 -------------------------------------------------------------------------

Outcome finite_differences() {
  constexpr Real kStep = 1e-4, kTol = 1e-3, kFloor = 1e-5;
  const Var x(random_tensor({1, 8, 12, 12}, 30, -1, 1));
  const Var ref(random_tensor({1, 8, 12, 12}, 31, -1, 1));
  Real worst = 0.0;
  std::string where;
  std::size_t checked = 0;
  auto probe = [&](const std::string& name, ParamStore& s, const std::function<Var()>& f) {
    const auto r = testing::check_param_gradients(s, f, kStep, kFloor);
    checked += r.checked;
    if (r.worst_rel > worst) {
      worst = r.worst_rel;
      where = name + " " + r.worst_where;
    }
  };
  {
    ParamStore s(1);
    ChannelAttention b(s, "ca", 8);
    probe("ca", s, [&] { return b(x); });
  }
  {
    ParamStore s(2);
    PixelAttention b(s, "pa", 8);
    probe("pa", s, [&] { return b(x); });
  }
  {
    ParamStore s(3);
    Cfa b(s, "cfa", 8);
    probe("cfa", s, [&] { return b(x); });
  }
  {
    ParamStore s(4);
    Regia b(s, "regia", 8, 6);
    probe("regia", s, [&] { return b(x); });
  }
  {
    ParamStore s(5);
    Hcafe b(s, "hcafe", 8);
    probe("hcafe", s, [&] { return b(x); });
  }
  {
    ParamStore s(6);
    Bica b(s, "bica", 8);
    probe("bica", s, [&] { return b(x); });
  }
  {
    ParamStore s(7);
    Asisf b(s, "asisf", 8, 8, 8);
    probe("asisf", s, [&] { return b(x, ref); });
  }
  return {worst < kTol, std::to_string(checked) + " parameters, worst relative error " + fmt(worst) +
                            " (need < 1e-3; step 1e-4, |g| floor 1e-5)" + (worst < kTol ? "" : " at " + where)};
}

// 7 -------------------------------------------------------------------------

Outcome overfit(const fs::path& work) {
  const fs::path root = fresh(work / "overfit_data");
  emit_synthetic_dataset(4, 72, 1, root);
  const PairedImages data = load_paired(root);
  TrainConfig cfg = TrainConfig::desk();
  cfg.checkpoint_dir = fresh(work / "overfit_run");
  const auto t0 = Clock::now();
  const TrainResult r = train(cfg, data, [](const TrainLogRecord& rec) {
    if (rec.iteration % 100 == 0) std::cout << "  overfit iteration " << rec.iteration << " loss " << rec.loss.total << std::endl;
  });
  Real p = 0.0;
  for (std::size_t i = 0; i < data.raw.size(); ++i) p += psnr(r.model.infer_full(data.raw[i]), data.reference[i]);
  p /= static_cast<Real>(data.raw.size());
  const Real elapsed = seconds_since(t0);
  const Real drop = r.log.front().loss.total / r.log.back().loss.total;
  return {p >= 30.0 && drop >= 10.0 && elapsed <= 600.0,
          "train-set PSNR " + fmt(p, 5) + " dB (need >= 30), loss drop " + fmt(drop, 4) + "x (need >= 10), " +
              fmt(elapsed, 4) + " s (need <= 600)"};
}

// 8 -------------------------------------------------------------------------

Outcome metric_oracles() {
  Real worst_ssim = 0.0, worst_brute = 0.0, worst_psnr = 0.0, worst_mse = 0.0;
  for (int s = 0; s < 10; ++s) {
    const Tensor a = wave(s, false), b = wave(s, true);
    const Real v = ssim(a, b);
    worst_ssim = std::max(worst_ssim, std::abs(v - kSkimageSsim[static_cast<std::size_t>(s)]));
    worst_brute = std::max(worst_brute, std::abs(v - brute_ssim(a, b)));
    worst_psnr = std::max(worst_psnr, std::abs(psnr(a, b) - direct_psnr(a, b)));
    worst_mse = std::max(worst_mse, std::abs(mse_rmse(a, b).mse - direct_mse(a, b)));
  }
  const bool fr_ok = worst_ssim <= 1e-4 && worst_brute <= 1e-4 && worst_psnr <= 1e-4 && worst_mse <= 1e-4;

  std::string failed;
  const Tensor gray({1, 3, 40, 40}, 0.4);
  const Tensor tinted = solid(40, 40, 0.2, 0.5, 0.6);
  const UiqmParts u = uiqm_parts(gray);
  if (std::abs(u.uicm) > 1e-12 || std::abs(u.uism) > 1e-12) failed += " uiqm-constant";
  const UciqeParts c = uciqe_parts(tinted);
  if (std::abs(c.value - NoReferenceConstants{}.uciqe_w3 * c.saturation_mean) > 1e-12) failed += " uciqe-constant";
  if (ccf_no_color(gray) != 0.0 || ccf_no_color(tinted) != 0.0) failed += " ccf-constant";
  if (ceiq(gray) != 0.0) failed += " ceiq-constant";

  Real worst_flip = 0.0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const Tensor img = flip_probe(seed);
    for (const Tensor& t : {flip_h(img), rot180(img)}) {
      worst_flip = std::max({worst_flip, std::abs(uiqm(t) - uiqm(img)), std::abs(uciqe(t) - uciqe(img)),
                             std::abs(ccf_no_color(t) - ccf_no_color(img)), std::abs(ceiq(t) - ceiq(img))});
    }
  }
  if (worst_flip > 1e-9) failed += " flip";

  const SharpBlur sb = uiqm_sharp_vs_blur(20);
  if (!(sb.sharp_mean > sb.blur_mean && sb.wins > sb.scenes / 2)) failed += " uiqm-order";
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto v = uciqe_chroma_sweep(seed);
    for (std::size_t i = 1; i < v.size(); ++i) {
      if (!(v[i] > v[i - 1])) failed += " uciqe-order";
    }
    const auto [clean, fogged] = ccf_fog_pair(seed);
    if (!(fogged < clean)) failed += " ccf-order";
    const auto [low, eq] = ceiq_equalize_pair(seed);
    if (!(eq >= low)) failed += " ceiq-order";
  }
  const bool ok = fr_ok && failed.empty();
  return {ok, "SSIM vs skimage " + fmt(worst_ssim, 3) + ", vs window oracle " + fmt(worst_brute, 3) + ", PSNR " +
                  fmt(worst_psnr, 3) + ", MSE " + fmt(worst_mse, 3) + " (need <= 1e-4); flip deviation " +
                  fmt(worst_flip, 3) + "; UIQM sharp>blur on " + std::to_string(sb.wins) + "/" +
                  std::to_string(sb.scenes) + " scenes" + (failed.empty() ? "" : "; failed:" + failed)};
}

// 9 -------------------------------------------------------------------------

Outcome ablation_harness(const fs::path& work) {
  const fs::path train_root = fresh(work / "ablation_train");
  const fs::path val_root = fresh(work / "ablation_val");
  emit_synthetic_dataset(8, 72, 0, train_root);
  emit_synthetic_dataset(4, 72, 1, val_root);
  const PairedImages train_set = load_paired(train_root), val_set = load_paired(val_root);
  TrainConfig base = TrainConfig::desk();
  base.iterations = 50;
  const auto t0 = Clock::now();
  std::string summary, bad;
  for (const AblationMatrix m : {AblationMatrix::stages, AblationMatrix::bica, AblationMatrix::asisf, AblationMatrix::loss}) {
    const AblationTable t = run_ablation_matrix(base, m, train_set, val_set, [](const AblationRow& r) {
      std::cout << "  ablation row [" << r.label << "] PSNR " << r.psnr << " SSIM " << r.ssim << std::endl;
    });
    t.write_csv(work / ("ablation_" + std::string(ablation_matrix_name(m)) + ".csv"));
    const std::size_t want = m == AblationMatrix::bica ? 5 : 4;
    std::set<std::string> labels, configs;
    for (const AblationRow& r : t.rows) {
      labels.insert(r.label);
      configs.insert(r.config.to_text());
      if (!std::isfinite(r.final_loss) || !std::isfinite(r.psnr) || !std::isfinite(r.ssim)) bad += " non-finite";
    }
    if (t.rows.size() != want || labels.size() != want || configs.size() != want) {
      bad += std::string(" ") + ablation_matrix_name(m);
    }
    summary += std::string(summary.empty() ? "" : ", ") + ablation_matrix_name(m) + " " + std::to_string(t.rows.size());
  }
  const Real elapsed = seconds_since(t0);
  return {bad.empty() && elapsed <= 1800.0, "rows " + summary + " (need 4, 5, 4, 4 distinct), " + fmt(elapsed, 4) +
                                                " s (need <= 1800)" + (bad.empty() ? "" : "; problems:" + bad)};
}

// 10 ------------------------------------------------------------------------

Outcome determinism(const fs::path& work) {
  const fs::path root = fresh(work / "determinism_data");
  emit_synthetic_dataset(4, 72, 2, root);
  const PairedImages data = load_paired(root);
  TrainConfig cfg = TrainConfig::desk();
  cfg.iterations = 100;
  cfg.seed = 5;
  cfg.model.init_seed = 5;
  cfg.checkpoint_dir = fresh(work / "determinism_a");
  const TrainResult a = train(cfg, data);
  cfg.checkpoint_dir = fresh(work / "determinism_b");
  const TrainResult b = train(cfg, data);
  Real worst = 0.0;
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    const Real x = a.log[i].loss.total, y = b.log[i].loss.total;
    worst = std::max(worst, std::abs(x - y) / std::max(std::abs(x), 1e-300));
  }
  const Model reloaded = load_model(a.final_checkpoint);
  const ScalePyramid p = build_input_pyramid(data.raw.front());
  const RestorationOutput o1 = a.model.forward(p), o2 = reloaded.forward(p);
  Real diff = 0.0;
  for (std::size_t k = 0; k < o1.outputs.size(); ++k) diff = std::max(diff, max_abs_diff(o1.outputs[k], o2.outputs[k]));
  const bool ok = a.log.size() == 100 && b.log.size() == 100 && worst <= 1e-6 && diff == 0.0;
  return {ok, "loss curves differ by " + fmt(worst) + " relative over " + std::to_string(a.log.size()) +
                  " iterations (need <= 1e-6); reloaded checkpoint output deviation " + fmt(diff) + " (need 0)"};
}

// 11 ------------------------------------------------------------------------

Outcome uifm_limits(const fs::path& work) {
  const Tensor clean = procedural_image(48, 3);
  const std::array<Real, 3> ambient{0.1, 0.6, 0.8};
  const Tensor same = synth_uifm(clean, {Tensor({1, 1, 48, 48}, 1.0), ambient});
  const Tensor veil = synth_uifm(clean, {Tensor({1, 1, 48, 48}, 0.0), ambient});
  const Real id_err = max_abs_diff(same, clean);
  Real veil_err = 0.0;
  for (int c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < veil.shape().plane(); ++i) {
      veil_err = std::max(veil_err, std::abs(veil.plane(0, c)[i] - ambient[static_cast<std::size_t>(c)]));
    }
  }
  const fs::path root = fresh(work / "uifm_data");
  emit_synthetic_dataset(16, 72, 4, root);
  const SyntheticManifest m = SyntheticManifest::load(root / "manifest.json");
  const ScanResult scan = scan_paired(root);
  Real worst = 0.0;
  for (std::size_t i = 0; i < scan.pairs.size(); ++i) {
    const Tensor ref = load_image(scan.pairs[i].reference_path);
    const Tensor raw = load_image(scan.pairs[i].raw_path);
    worst = std::max(worst, max_abs_diff(rederive_degraded(ref, m.samples[i]), raw));
  }
  const bool ok = id_err == 0.0 && veil_err == 0.0 && scan.pairs.size() == 16 && m.samples.size() == 16 &&
                  worst <= 1.0 / 510.0 + 1e-12;
  return {ok, "t=1 deviation " + fmt(id_err) + ", t=0 deviation from A " + fmt(veil_err) + ", re-derivation error " +
                  fmt(worst) + " over " + std::to_string(scan.pairs.size()) + " samples (need <= 1/510)"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string workdir = "acceptance_work";
  std::vector<int> only;
  app.add_option("--workdir", workdir, "scratch directory for datasets and checkpoints");
  app.add_option("--only", only, "run a subset of criteria by number")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const fs::path work(workdir);
  fs::create_directories(work);
  Report report(work / "acceptance_report.txt");
  auto want = [&](int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };

  if (want(1)) report.run(1, "composite arithmetic", composite_arithmetic);
  if (want(2)) report.run(2, "shape contract", shape_contract);
  if (want(3)) report.run(3, "gradient coverage", gradient_coverage);
  if (want(4)) report.run(4, "residual identities", residual_identities);
  if (want(5)) report.run(5, "loss identities", loss_identities);
  if (want(6)) report.run(6, "finite differences", finite_differences);
  if (want(7)) report.run(7, "overfit smoke test", [&] { return overfit(work); });
  if (want(8)) report.run(8, "metric oracles", metric_oracles);
  if (want(9)) report.run(9, "ablation harness", [&] { return ablation_harness(work); });
  if (want(10)) report.run(10, "determinism", [&] { return determinism(work); });
  if (want(11)) report.run(11, "uifm generator limits", [&] { return uifm_limits(work); });

  std::cout << (report.failures() == 0 ? "all criteria passed" : std::to_string(report.failures()) + " criteria failed")
            << std::endl;
  return report.failures() == 0 ? 0 : 1;
}
