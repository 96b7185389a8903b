#pragma once

#include <array>
#include <utility>
#include <vector>

#include "smdris/rng.hpp"
#include "smdris/tensor.hpp"

namespace smdris {

inline constexpr int kPyramidLevels = 4;
inline constexpr std::array<double, kPyramidLevels> kScaleFactors{1.0, 0.5, 0.25, 0.125};

/// Four aligned resolutions of the same image batch: level k is 1/2^k of level 0.
struct ScalePyramid {
  std::vector<Tensor> levels;

  int size() const { return static_cast<int>(levels.size()); }
  const Tensor& operator[](int k) const { return levels.at(static_cast<std::size_t>(k)); }
};

struct PadSpec {
  int top = 0;
  int bottom = 0;
  int left = 0;
  int right = 0;
  int original_h = 0;
  int original_w = 0;
  // Set when an axis was too short to mirror and edge replication was used.
  bool replicate_fallback = false;

  bool is_zero() const { return top == 0 && bottom == 0 && left == 0 && right == 0; }
};

/// Mean over non-overlapping factor x factor blocks. Dims must be divisible.
Tensor area_downsample(const Tensor& image, int factor);

ScalePyramid build_input_pyramid(const Tensor& image);
ScalePyramid build_target_pyramid(const Tensor& reference);

/// Mirror-pads (edge sample not repeated) to the next multiple on each axis,
/// splitting the padding evenly with the odd pixel on bottom/right.
std::pair<Tensor, PadSpec> pad_to_multiple(const Tensor& image, int multiple);
Tensor crop_to_original(const Tensor& image, const PadSpec& spec);

/// Mirror-pads to at least `size` on each axis and takes the same random
/// size x size window from both tensors.
std::pair<Tensor, Tensor> random_paired_crop(const Tensor& raw, const Tensor& ref, int size, Rng& rng);

/// Mirror padding with explicit amounts; shared by the padding helpers.
Tensor pad_reflect(const Tensor& image, int top, int bottom, int left, int right, bool* used_replicate = nullptr);
Tensor crop_window(const Tensor& image, int top, int left, int h, int w);

}  // namespace smdris
