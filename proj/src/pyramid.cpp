#include "smdris/pyramid.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace smdris {

namespace {

constexpr int kPyramidDivisor = 1 << (kPyramidLevels - 1);

void check_divisible(const Tensor& image) {
  const Shape& s = image.shape();
  if (s.h % kPyramidDivisor != 0) {
    throw std::invalid_argument("pyramid: height " + std::to_string(s.h) + " is not divisible by " +
                                std::to_string(kPyramidDivisor));
  }
  if (s.w % kPyramidDivisor != 0) {
    throw std::invalid_argument("pyramid: width " + std::to_string(s.w) + " is not divisible by " +
                                std::to_string(kPyramidDivisor));
  }
}

ScalePyramid build_pyramid(const Tensor& image) {
  check_divisible(image);
  ScalePyramid p;
  p.levels.reserve(kPyramidLevels);
  p.levels.push_back(image);
  for (int k = 1; k < kPyramidLevels; ++k) p.levels.push_back(area_downsample(p.levels.back(), 2));
  return p;
}

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

}  // namespace

Tensor area_downsample(const Tensor& image, int factor) {
  const Shape& s = image.shape();
  if (factor < 1 || s.h % factor != 0 || s.w % factor != 0) {
    throw std::invalid_argument("area_downsample: " + s.str() + " not divisible by " +
                                std::to_string(factor));
  }
  if (factor == 1) return image;
  const int Ho = s.h / factor;
  const int Wo = s.w / factor;
  const Real inv = 1.0 / (static_cast<Real>(factor) * factor);
  Tensor out({s.n, s.c, Ho, Wo}, 0.0);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const Real* src = image.plane(n, c);
      Real* dst = out.plane(n, c);
      for (int y = 0; y < Ho; ++y) {
        for (int x = 0; x < Wo; ++x) {
          Real acc = 0.0;
          for (int dy = 0; dy < factor; ++dy) {
            const Real* row = src + static_cast<std::size_t>(y * factor + dy) * s.w + x * factor;
            for (int dx = 0; dx < factor; ++dx) acc += row[dx];
          }
          dst[static_cast<std::size_t>(y) * Wo + x] = acc * inv;
        }
      }
    }
  }
  return out;
}

ScalePyramid build_input_pyramid(const Tensor& image) { return build_pyramid(image); }

// Same resampling rule as the input side so levels stay aligned.
ScalePyramid build_target_pyramid(const Tensor& reference) { return build_pyramid(reference); }

Tensor pad_reflect(const Tensor& image, int top, int bottom, int left, int right, bool* used_replicate) {
  const Shape& s = image.shape();
  if (top < 0 || bottom < 0 || left < 0 || right < 0) {
    throw std::invalid_argument("pad_reflect: negative padding");
  }
  const bool pad_h = top + bottom > 0;
  const bool pad_w = left + right > 0;
  if (used_replicate != nullptr) *used_replicate = (pad_h && s.h < 2) || (pad_w && s.w < 2);
  const int H = s.h + top + bottom;
  const int W = s.w + left + right;
  std::vector<int> src_x(static_cast<std::size_t>(W));
  for (int x = 0; x < W; ++x) src_x[static_cast<std::size_t>(x)] = reflect_index(x - left, s.w);
  Tensor out({s.n, s.c, H, W});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const Real* src = image.plane(n, c);
      Real* dst = out.plane(n, c);
      for (int y = 0; y < H; ++y) {
        const Real* row = src + static_cast<std::size_t>(reflect_index(y - top, s.h)) * s.w;
        for (int x = 0; x < W; ++x) dst[static_cast<std::size_t>(y) * W + x] = row[src_x[static_cast<std::size_t>(x)]];
      }
    }
  }
  return out;
}

Tensor crop_window(const Tensor& image, int top, int left, int h, int w) {
  const Shape& s = image.shape();
  if (top < 0 || left < 0 || h < 1 || w < 1 || top + h > s.h || left + w > s.w) {
    throw std::invalid_argument("crop_window: window out of bounds for " + s.str());
  }
  Tensor out({s.n, s.c, h, w});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int y = 0; y < h; ++y) {
        const Real* row = image.plane(n, c) + static_cast<std::size_t>(top + y) * s.w + left;
        std::copy(row, row + w, out.plane(n, c) + static_cast<std::size_t>(y) * w);
      }
    }
  }
  return out;
}

std::pair<Tensor, PadSpec> pad_to_multiple(const Tensor& image, int multiple) {
  if (multiple < 1) throw std::invalid_argument("pad_to_multiple: multiple must be >= 1");
  const Shape& s = image.shape();
  const int total_h = (multiple - s.h % multiple) % multiple;
  const int total_w = (multiple - s.w % multiple) % multiple;
  PadSpec spec;
  spec.top = total_h / 2;
  spec.bottom = total_h - spec.top;
  spec.left = total_w / 2;
  spec.right = total_w - spec.left;
  spec.original_h = s.h;
  spec.original_w = s.w;
  if (spec.is_zero()) return {image, spec};
  Tensor padded = pad_reflect(image, spec.top, spec.bottom, spec.left, spec.right, &spec.replicate_fallback);
  return {std::move(padded), spec};
}

Tensor crop_to_original(const Tensor& image, const PadSpec& spec) {
  const Shape& s = image.shape();
  if (s.h != spec.original_h + spec.top + spec.bottom || s.w != spec.original_w + spec.left + spec.right) {
    throw std::invalid_argument("crop_to_original: image " + s.str() + " does not match padding record (" +
                                std::to_string(spec.original_h) + "x" + std::to_string(spec.original_w) +
                                " plus pads)");
  }
  if (spec.is_zero()) return image;
  return crop_window(image, spec.top, spec.left, spec.original_h, spec.original_w);
}

std::pair<Tensor, Tensor> random_paired_crop(const Tensor& raw, const Tensor& ref, int size, Rng& rng) {
  if (size < 1) throw std::invalid_argument("random_paired_crop: size must be positive");
  if (!(raw.shape() == ref.shape())) {
    throw std::invalid_argument("random_paired_crop: raw " + raw.shape().str() + " and reference " +
                                ref.shape().str() + " differ");
  }
  const Shape& s = raw.shape();
  const int short_h = std::max(0, size - s.h);
  const int short_w = std::max(0, size - s.w);
  Tensor a = raw;
  Tensor b = ref;
  if (short_h > 0 || short_w > 0) {
    a = pad_reflect(raw, short_h / 2, short_h - short_h / 2, short_w / 2, short_w - short_w / 2);
    b = pad_reflect(ref, short_h / 2, short_h - short_h / 2, short_w / 2, short_w - short_w / 2);
  }
  const int top = rng.uniform_int(0, a.shape().h - size);
  const int left = rng.uniform_int(0, a.shape().w - size);
  return {crop_window(a, top, left, size, size), crop_window(b, top, left, size, size)};
}

}  // namespace smdris
