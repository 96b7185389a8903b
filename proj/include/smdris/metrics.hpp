#pragma once

// Full-reference and no-reference image quality metrics, and the composite
// ALL / aggregative scores used in evaluation tables.
//
// Images are {N, 3, H, W} tensors in [0, 1]. Full-reference metrics pool over
// the batch; no-reference metrics take a single image (N = 1).

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "smdris/tensor.hpp"

namespace smdris {

inline constexpr Real kPsnrCap = 100.0;

// Luma weights for RGB -> gray (Rec. 601).
inline constexpr Real kLumaR = 0.299;
inline constexpr Real kLumaG = 0.587;
inline constexpr Real kLumaB = 0.114;

struct MseRmse {
  Real mse = 0.0;
  Real rmse = 0.0;
};

Real psnr(const Tensor& pred, const Tensor& target);
MseRmse mse_rmse(const Tensor& pred, const Tensor& target);
// Gaussian-window SSIM (11x11, sigma 1.5, K1 0.01, K2 0.03, data range 1) on
// the luma channel, averaged over window positions fully inside the image.
Real ssim(const Tensor& pred, const Tensor& target);
// Same statistic on single-channel planes {N, 1, H, W}.
Real ssim_plane(const Tensor& a, const Tensor& b);

/// Constants of the no-reference metrics. Defaults are the values from each metric's original formulation;
/// CEIQ's regression is a linear surrogate (see README).
struct NoReferenceConstants {
  Real uiqm_c1 = 0.0282, uiqm_c2 = 0.2953, uiqm_c3 = 3.5753;
  Real uicm_alpha = 0.1;
  int uiqm_block = 10;
  Real uciqe_w1 = 0.4680, uciqe_w2 = 0.2745, uciqe_w3 = 0.2576;
  Real ccf_contrast = 0.61759, ccf_fog = 0.33988;
  int ccf_dark_patch = 7;
  Real ceiq_ssim = 1.0, ceiq_entropy = 0.25, ceiq_entropy_eq = 0.05;
  Real ceiq_cross_entropy = -0.01, ceiq_cross_entropy_rev = -0.01;
};

struct UiqmParts {
  Real uicm = 0.0, uism = 0.0, uiconm = 0.0, value = 0.0;
};
struct UciqeParts {
  Real chroma_std = 0.0, luma_contrast = 0.0, saturation_mean = 0.0, value = 0.0;
};
struct CcfParts {
  Real contrast = 0.0, fog = 0.0, value = 0.0;
};
struct CeiqParts {
  Real ssim_eq = 0.0, entropy = 0.0, entropy_eq = 0.0, cross_entropy = 0.0, cross_entropy_rev = 0.0;
  Real value = 0.0;
};

UiqmParts uiqm_parts(const Tensor& image, const NoReferenceConstants& k = {});
UciqeParts uciqe_parts(const Tensor& image, const NoReferenceConstants& k = {});
CcfParts ccf_parts(const Tensor& image, const NoReferenceConstants& k = {});
CeiqParts ceiq_parts(const Tensor& image, const NoReferenceConstants& k = {});

inline Real uiqm(const Tensor& image, const NoReferenceConstants& k = {}) { return uiqm_parts(image, k).value; }
inline Real uciqe(const Tensor& image, const NoReferenceConstants& k = {}) { return uciqe_parts(image, k).value; }
inline Real ccf_no_color(const Tensor& image, const NoReferenceConstants& k = {}) { return ccf_parts(image, k).value; }
inline Real ceiq(const Tensor& image, const NoReferenceConstants& k = {}) { return ceiq_parts(image, k).value; }

// CIE L*a*b* (sRGB, D65 white) of one pixel, L in [0, 100].
struct Lab {
  Real l, a, b;
};
Lab rgb_to_lab(Real r, Real g, Real b);

enum class Direction { higher, lower };

struct MetricValue {
  std::string name;
  Real value = 0.0;
  Direction direction = Direction::higher;
};

class MetricReport {
 public:
  void set(const std::string& name, Real value, Direction direction);
  // Direction looked up from the known metric names; throws for unknown names.
  void set(const std::string& name, Real value);
  std::optional<Real> get(const std::string& name) const;
  const std::vector<MetricValue>& values() const { return values_; }
  bool empty() const { return values_.empty(); }

 private:
  std::vector<MetricValue> values_;
};

// Direction of a known column name (PSNR, MSE, RMSE, SSIM, VSI, FSIM, FSIMc,
// UIQM, UCIQE, CCF, CEIQ).
std::optional<Direction> metric_direction(const std::string& name);

// Sum of higher-better values minus sum of lower-better values.
Real all_score(const MetricReport& report);
Real aggregative(Real metric_sum, Real seconds_per_image);

struct EvalOptions {
  bool paired = true;
  // Report RMSE under the MSE column.
  bool paper_compat = false;
  NoReferenceConstants constants{};
};

// Metrics of one restored image (and its reference when paired).
MetricReport evaluate_image(const Tensor& restored, const Tensor* reference, const EvalOptions& options);

struct EvalRow {
  std::string id;
  MetricReport metrics;
  Real seconds = 0.0;
};

struct EvalTable {
  std::vector<EvalRow> rows;
  int skipped = 0;

  // Column-wise mean over rows (id "mean").
  EvalRow mean_row() const;
  void write_csv(const std::filesystem::path& path) const;
  void write_json(const std::filesystem::path& path) const;
};

}  // namespace smdris
