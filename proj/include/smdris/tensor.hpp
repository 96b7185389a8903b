#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace smdris {

using Real = double;

/// NCHW extent. Every tensor in the library is rank 4; vectors and scalars use
/// unit dimensions (a per-channel vector is {1, C, 1, 1}, a scalar {1, 1, 1, 1}).
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) * static_cast<std::size_t>(h) *
           static_cast<std::size_t>(w);
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * static_cast<std::size_t>(w); }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, Real fill = 0.0);
  Tensor(Shape shape, std::vector<Real> data);

  const Shape& shape() const { return shape_; }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  Real* data() { return data_.data(); }
  const Real* data() const { return data_.data(); }
  std::span<Real> values() { return data_; }
  std::span<const Real> values() const { return data_; }

  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }

  std::size_t offset(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  Real& at(int n, int c, int h, int w) { return data_[offset(n, c, h, w)]; }
  Real at(int n, int c, int h, int w) const { return data_[offset(n, c, h, w)]; }

  Real* plane(int n, int c) { return data_.data() + offset(n, c, 0, 0); }
  const Real* plane(int n, int c) const { return data_.data() + offset(n, c, 0, 0); }

  void fill(Real v);
  bool all_finite() const;
  Real sum() const;
  Real mean() const;
  Real min() const;
  Real max() const;

  // One sample of the batch as a {1, C, H, W} tensor.
  Tensor sample(int n) const;

 private:
  Shape shape_{};
  std::vector<Real> data_;
};

/// Stacks {1, C, H, W} (or {k, C, H, W}) tensors along the batch axis.
Tensor stack_batch(std::span<const Tensor> parts);

Real max_abs_diff(const Tensor& a, const Tensor& b);

/// Validates an image batch: rank-4 with exactly 3 channels and finite values.
/// Throws std::invalid_argument naming `what`.
void check_image_batch(const Tensor& image, const char* what);

}  // namespace smdris
