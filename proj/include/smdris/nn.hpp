#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "smdris/autograd.hpp"

namespace smdris {

/// Ordered registry of named trainable tensors.
///
/// Initial values are a pure function of (seed, parameter name), so a model
/// rebuilt from the same configuration is bit-identical regardless of the
/// order in which its sub-blocks were constructed.
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : seed_(seed) {}

  // Uniform(-bound, bound) initialization.
  Var create_uniform(const std::string& name, Shape shape, Real bound);
  Var create_constant(const std::string& name, Shape shape, Real value);

  struct Entry {
    std::string name;
    Var var;
  };
  const std::vector<Entry>& entries() const { return entries_; }
  const Var& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t total_count() const;
  // Number of scalars whose name starts with `prefix`.
  std::size_t count_with_prefix(const std::string& prefix) const;
  void zero_grad();
  std::uint64_t seed() const { return seed_; }

 private:
  Var add(const std::string& name, Tensor value);

  std::uint64_t seed_;
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

/// Conv layer with PyTorch-style default initialization (bound 1/sqrt(fan_in)).
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParamStore& store, const std::string& name, int in_channels, int out_channels, int kernel,
         ConvGeometry geometry = {}, bool with_bias = true);

  Var operator()(const Var& x) const;

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  const Var& weight() const { return weight_; }
  const std::optional<Var>& bias() const { return bias_; }
  // Sets every weight (and bias) element to zero.
  void zero();

 private:
  int in_ = 0;
  int out_ = 0;
  ConvGeometry geometry_{};
  Var weight_;
  std::optional<Var> bias_;
};

/// "same" geometry for an odd kernel at the given dilation.
inline ConvGeometry same_padding(int kernel, int dilation = 1) {
  return {1, dilation * (kernel - 1) / 2, dilation};
}

}  // namespace smdris
