#include <doctest.h>

#include <array>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "smdris/data_io.hpp"
#include "smdris/metrics.hpp"
#include "metric_fixtures.hpp"
#include "test_util.hpp"

using namespace smdris;
using testing::random_tensor;
namespace fs = std::filesystem;

using namespace smdris::fixtures;

namespace {

fs::path tmp_dir() {
  const char* env = std::getenv("SMDRIS_TEST_TMP");
  fs::path p = env ? fs::path(env) : fs::temp_directory_path() / "smdris_test_metrics";
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("psnr and mse examples") {
  const Shape s{1, 3, 12, 12};
  CHECK(psnr(Tensor(s, 0.5), Tensor(s, 0.75)) == doctest::Approx(12.0412).epsilon(1e-5));
  CHECK(psnr(Tensor(s, 0.0), Tensor(s, 1.0)) == doctest::Approx(0.0));
  const Tensor x = random_tensor(s, 1);
  CHECK(psnr(x, x) == kPsnrCap);
  const MseRmse z = mse_rmse(x, x);
  CHECK(z.mse == 0.0);
  CHECK(z.rmse == 0.0);
  const MseRmse one = mse_rmse(Tensor(s, 0.0), Tensor(s, 1.0));
  CHECK(one.mse == 1.0);
  CHECK(one.rmse == 1.0);
  CHECK(mse_rmse(Tensor(s, 0.5), Tensor(s, 0.75)).rmse == doctest::Approx(0.25).epsilon(1e-12));
  CHECK_THROWS_AS(psnr(x, Tensor({1, 3, 12, 11})), std::invalid_argument);
}

TEST_CASE("ssim matches a brute-force window oracle and frozen reference values") {
  for (int s = 0; s < 10; ++s) {
    const Tensor a = wave(s, false), b = wave(s, true);
    const Real v = ssim(a, b);
    CHECK(v == doctest::Approx(kSkimageSsim[static_cast<std::size_t>(s)]).epsilon(1e-4));
    CHECK(v == doctest::Approx(brute_ssim(a, b)).epsilon(1e-9));
    CHECK(psnr(a, b) == doctest::Approx(direct_psnr(a, b)).epsilon(1e-12));
    CHECK(mse_rmse(a, b).mse == doctest::Approx(direct_mse(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("ssim identity, noise bound, and errors") {
  const Tensor x = procedural_image(48, 3);
  CHECK(ssim(x, x) == doctest::Approx(1.0).epsilon(1e-12));
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CHECK(ssim(procedural_image(48, seed), random_tensor({1, 3, 48, 48}, 1000 + seed)) < 0.5);
  }
  CHECK_THROWS_AS(ssim(Tensor({1, 3, 10, 40}), Tensor({1, 3, 10, 40})), std::invalid_argument);
}

TEST_CASE("no-reference metrics on a constant image") {
  const Tensor gray({1, 3, 40, 40}, 0.4);
  const UiqmParts u = uiqm_parts(gray);
  CHECK(u.uicm == doctest::Approx(0.0));
  CHECK(u.uism == doctest::Approx(0.0));

  const Tensor tinted = solid(40, 40, 0.2, 0.5, 0.6);
  const UciqeParts c = uciqe_parts(tinted);
  CHECK(c.chroma_std == doctest::Approx(0.0));
  CHECK(c.luma_contrast == doctest::Approx(0.0));
  const NoReferenceConstants k;
  CHECK(c.value == doctest::Approx(k.uciqe_w3 * c.saturation_mean).epsilon(1e-12));
  CHECK(c.saturation_mean > 0.0);

  CHECK(ccf_no_color(gray) == 0.0);
  CHECK(ccf_no_color(tinted) == 0.0);
  CHECK(ceiq(gray) == 0.0);
  CHECK(ceiq_parts(tinted).entropy == 0.0);
}

TEST_CASE("no-reference metrics are flip and rotation invariant") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const Tensor img = flip_probe(seed);
    for (const Tensor& t : {flip_h(img), rot180(img)}) {
      CHECK(uiqm(t) == doctest::Approx(uiqm(img)).epsilon(1e-9));
      CHECK(uciqe(t) == doctest::Approx(uciqe(img)).epsilon(1e-9));
      CHECK(ccf_no_color(t) == doctest::Approx(ccf_no_color(img)).epsilon(1e-9));
      CHECK(ceiq(t) == doctest::Approx(ceiq(img)).epsilon(1e-9));
    }
  }
}

TEST_CASE("uiqm prefers sharpened over blurred images across seeded scenes") {
  const SharpBlur r = uiqm_sharp_vs_blur(20);
  CHECK(r.sharp_mean > r.blur_mean);
  CHECK(r.wins > r.scenes / 2);
}

TEST_CASE("uciqe increases under chroma amplification") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto v = uciqe_chroma_sweep(seed);
    for (std::size_t i = 1; i < v.size(); ++i) CHECK(v[i] > v[i - 1]);
  }
}

TEST_CASE("ccf decreases under a synthetic fog overlay") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto [clean, fogged] = ccf_fog_pair(seed);
    CHECK(fogged < clean);
  }
}

TEST_CASE("ceiq of an equalized image is at least that of its low-contrast source") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto [low, eq] = ceiq_equalize_pair(seed);
    CHECK(eq >= low);
  }
}

TEST_CASE("no-reference metrics are pure and reject non-RGB input") {
  const Tensor img = procedural_image(48, 9);
  CHECK(uiqm(img) == uiqm(img));
  CHECK(uciqe(img) == uciqe(img));
  CHECK(ccf_no_color(img) == ccf_no_color(img));
  CHECK(ceiq(img) == ceiq(img));
  CHECK_THROWS_AS(uiqm(Tensor({1, 1, 20, 20})), std::invalid_argument);
  CHECK_THROWS_AS(uciqe(Tensor({2, 3, 20, 20})), std::invalid_argument);
}

TEST_CASE("lab conversion of reference colors") {
  const Lab white = rgb_to_lab(1, 1, 1);
  CHECK(white.l == doctest::Approx(100.0).epsilon(1e-4));
  CHECK(std::abs(white.a) < 1e-3);
  CHECK(std::abs(white.b) < 1e-3);
  const Lab red = rgb_to_lab(1, 0, 0);
  CHECK(red.l == doctest::Approx(53.2408).epsilon(1e-4));
  CHECK(red.a == doctest::Approx(80.0925).epsilon(1e-4));
  CHECK(red.b == doctest::Approx(67.2032).epsilon(1e-4));
}

TEST_CASE("composite scores reproduce the reference arithmetic") {
  auto row = [](std::array<Real, 10> v) {
    MetricReport r;
    const char* names[] = {"PSNR", "MSE", "SSIM", "VSI", "FSIM", "FSIMc", "UIQM", "UCIQE", "CCF", "CEIQ"};
    for (std::size_t i = 0; i < v.size(); ++i) r.set(names[i], v[i]);
    return r;
  };
  const MetricReport ours = row({23.710, 0.075, 0.922, 0.983, 0.967, 0.957, 3.015, 0.607, 26.012, 3.369});
  CHECK(std::abs(all_score(ours) - 60.466) <= 0.01);
  const MetricReport ulap = row({15.913, 0.174, 0.745, 0.947, 0.915, 0.878, 2.259, 0.604, 24.145, 3.209});
  CHECK(std::abs(all_score(ulap) - 49.441) <= 0.01);

  CHECK(aggregative(60.466, 0.0607) == doctest::Approx(60.4053).epsilon(1e-9));
  CHECK(aggregative(49.441, 0.3583) == doctest::Approx(49.0827).epsilon(1e-9));
  CHECK(aggregative(7.5, 0.0) == 7.5);
  CHECK_THROWS_AS(aggregative(1.0, -0.1), std::invalid_argument);

  CHECK(all_score(MetricReport{}) == 0.0);
  MetricReport p;
  p.set("PSNR", 10.0);
  CHECK(all_score(p) == 10.0);
  CHECK_THROWS_AS(p.set("NIQE", 1.0), std::invalid_argument);
  CHECK(metric_direction("MSE") == Direction::lower);
}

TEST_CASE("evaluation tables write directions, ALL and seconds") {
  const Tensor a = procedural_image(48, 1), b = procedural_image(48, 2);
  EvalTable table;
  for (int i = 0; i < 2; ++i) {
    EvalRow row;
    row.id = "img" + std::to_string(i);
    row.metrics = evaluate_image(i == 0 ? a : b, &a, {});
    row.seconds = 0.5 * (i + 1);
    table.rows.push_back(row);
  }
  CHECK(table.rows[0].metrics.get("PSNR") == kPsnrCap);
  CHECK(table.rows[0].metrics.get("SSIM") == doctest::Approx(1.0));
  const EvalRow mean = table.mean_row();
  CHECK(mean.seconds == doctest::Approx(0.75));

  const fs::path csv = tmp_dir() / "table.csv", json = tmp_dir() / "table.json";
  table.write_csv(csv);
  table.write_json(json);
  std::ifstream is(csv);
  std::string first, header;
  std::getline(is, first);
  std::getline(is, header);
  CHECK(first.find("MSE=down") != std::string::npos);
  CHECK(header == "id,PSNR,MSE,SSIM,UIQM,UCIQE,CCF,CEIQ,ALL,seconds");
  int lines = 0;
  for (std::string l; std::getline(is, l);) ++lines;
  CHECK(lines == 3);

  std::ifstream js(json);
  const nlohmann::json j = nlohmann::json::parse(js);
  CHECK(j["rows"].size() == 2);
  CHECK(j["directions"]["MSE"] == "lower");
  CHECK(j["mean"]["ALL"].get<Real>() == doctest::Approx(all_score(mean.metrics)));

  EvalOptions unpaired;
  unpaired.paired = false;
  const MetricReport nr = evaluate_image(a, nullptr, unpaired);
  CHECK_FALSE(nr.get("PSNR").has_value());
  CHECK(nr.get("UIQM").has_value());
  EvalOptions compat;
  compat.paper_compat = true;
  const MetricReport rc = evaluate_image(b, &a, compat);
  CHECK(*rc.get("MSE") == doctest::Approx(mse_rmse(b, a).rmse));
  CHECK_THROWS_AS(evaluate_image(a, nullptr, {}), std::invalid_argument);
}
