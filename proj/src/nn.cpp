#include "smdris/nn.hpp"

#include <cmath>
#include <stdexcept>

#include "smdris/rng.hpp"

namespace smdris {

Var ParamStore::add(const std::string& name, Tensor value) {
  if (index_.count(name) != 0) throw std::logic_error("duplicate parameter name: " + name);
  Var v(std::move(value), true);
  index_.emplace(name, entries_.size());
  entries_.push_back({name, v});
  return v;
}

Var ParamStore::create_uniform(const std::string& name, Shape shape, Real bound) {
  Rng rng(derive_seed(seed_, name));
  Tensor t(shape);
  for (Real& v : t.values()) v = rng.uniform(-bound, bound);
  return add(name, std::move(t));
}

Var ParamStore::create_constant(const std::string& name, Shape shape, Real value) {
  return add(name, Tensor(shape, value));
}

const Var& ParamStore::get(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
  return entries_[it->second].var;
}

std::size_t ParamStore::total_count() const {
  std::size_t n = 0;
  for (const Entry& e : entries_) n += e.var.value().numel();
  return n;
}

std::size_t ParamStore::count_with_prefix(const std::string& prefix) const {
  std::size_t n = 0;
  for (const Entry& e : entries_) {
    if (e.name.compare(0, prefix.size(), prefix) == 0) n += e.var.value().numel();
  }
  return n;
}

void ParamStore::zero_grad() {
  for (Entry& e : entries_) e.var.zero_grad();
}

Conv2d::Conv2d(ParamStore& store, const std::string& name, int in_channels, int out_channels,
               int kernel, ConvGeometry geometry, bool with_bias)
    : in_(in_channels), out_(out_channels), geometry_(geometry) {
  if (in_channels < 1 || out_channels < 1 || kernel < 1) {
    throw std::invalid_argument("conv '" + name + "': channel counts and kernel must be positive");
  }
  const Real bound = 1.0 / std::sqrt(static_cast<Real>(in_channels * kernel * kernel));
  weight_ = store.create_uniform(name + ".weight", {out_channels, in_channels, kernel, kernel}, bound);
  if (with_bias) bias_ = store.create_uniform(name + ".bias", {1, out_channels, 1, 1}, bound);
}

Var Conv2d::operator()(const Var& x) const { return conv2d(x, weight_, bias_, geometry_); }

void Conv2d::zero() {
  weight_.mutable_value().fill(0.0);
  if (bias_) bias_->mutable_value().fill(0.0);
}

}  // namespace smdris
