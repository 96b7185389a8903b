#include "smdris/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace smdris {

std::string Shape::str() const {
  return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" +
         std::to_string(w);
}

Tensor::Tensor(Shape shape, Real fill) : shape_(shape) {
  if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
    throw std::invalid_argument("negative tensor extent " + shape.str());
  }
  data_.assign(shape.numel(), fill);
}

Tensor::Tensor(Shape shape, std::vector<Real> data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape.numel()) {
    throw std::invalid_argument("tensor data size " + std::to_string(data_.size()) +
                                " does not match shape " + shape.str());
  }
}

void Tensor::fill(Real v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](Real v) { return std::isfinite(v); });
}

Real Tensor::sum() const { return std::accumulate(data_.begin(), data_.end(), Real{0}); }

Real Tensor::mean() const { return data_.empty() ? 0.0 : sum() / static_cast<Real>(data_.size()); }

Real Tensor::min() const {
  return data_.empty() ? std::numeric_limits<Real>::quiet_NaN()
                       : *std::min_element(data_.begin(), data_.end());
}

Real Tensor::max() const {
  return data_.empty() ? std::numeric_limits<Real>::quiet_NaN()
                       : *std::max_element(data_.begin(), data_.end());
}

Tensor Tensor::sample(int n) const {
  if (n < 0 || n >= shape_.n) throw std::out_of_range("sample index out of range");
  const std::size_t per = numel() / static_cast<std::size_t>(shape_.n);
  const auto first = data_.begin() + static_cast<std::ptrdiff_t>(per * static_cast<std::size_t>(n));
  return Tensor({1, shape_.c, shape_.h, shape_.w}, std::vector<Real>(first, first + static_cast<std::ptrdiff_t>(per)));
}

Tensor stack_batch(std::span<const Tensor> parts) {
  if (parts.empty()) throw std::invalid_argument("stack_batch: no tensors");
  Shape s = parts.front().shape();
  int total = 0;
  for (const Tensor& t : parts) {
    const Shape& ts = t.shape();
    if (ts.c != s.c || ts.h != s.h || ts.w != s.w) {
      throw std::invalid_argument("stack_batch: shape mismatch " + ts.str() + " vs " + s.str());
    }
    total += ts.n;
  }
  s.n = total;
  std::vector<Real> data;
  data.reserve(s.numel());
  for (const Tensor& t : parts) data.insert(data.end(), t.values().begin(), t.values().end());
  return Tensor(s, std::move(data));
}

Real max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!(a.shape() == b.shape())) {
    throw std::invalid_argument("max_abs_diff: shape mismatch " + a.shape().str() + " vs " +
                                b.shape().str());
  }
  Real m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

void check_image_batch(const Tensor& image, const char* what) {
  const Shape& s = image.shape();
  if (s.c != 3) {
    throw std::invalid_argument(std::string(what) + ": expected 3 channels, got " + s.str());
  }
  if (s.n < 1 || s.h < 1 || s.w < 1) {
    throw std::invalid_argument(std::string(what) + ": empty image batch " + s.str());
  }
  if (!image.all_finite()) {
    throw std::invalid_argument(std::string(what) + ": non-finite values");
  }
}

}  // namespace smdris
