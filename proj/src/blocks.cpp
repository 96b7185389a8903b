#include "smdris/blocks.hpp"

#include <algorithm>
#include <stdexcept>

namespace smdris {

namespace {

void check_channels(const FeatureMap& f, int expected, const char* block) {
  if (f.shape().c != expected) {
    throw std::invalid_argument(std::string(block) + ": expected " + std::to_string(expected) +
                                " channels, got " + f.shape().str());
  }
}

int bottleneck(int channels) { return std::max(1, channels / 4); }

}  // namespace

ChannelAttention::ChannelAttention(ParamStore& store, const std::string& name, int channels)
    : channels_(channels),
      squeeze_(store, name + ".squeeze", channels, bottleneck(channels), 1),
      excite_(store, name + ".excite", bottleneck(channels), channels, 1) {}

Var ChannelAttention::gate(const FeatureMap& f) const {
  check_channels(f, channels_, "channel_attention");
  return sigmoid(excite_(silu(squeeze_(global_avg_pool(f)))));
}

FeatureMap ChannelAttention::operator()(const FeatureMap& f) const { return mul(f, gate(f)); }

PixelAttention::PixelAttention(ParamStore& store, const std::string& name, int channels)
    : channels_(channels),
      reduce_(store, name + ".reduce", channels, bottleneck(channels), 1),
      project_(store, name + ".project", bottleneck(channels), 1, 1) {}

Var PixelAttention::gate(const FeatureMap& f) const {
  check_channels(f, channels_, "pixel_attention");
  return sigmoid(project_(silu(reduce_(f))));
}

FeatureMap PixelAttention::operator()(const FeatureMap& f) const { return mul(f, gate(f)); }

Cfa::Cfa(ParamStore& store, const std::string& name, int channels, bool use_ca, bool use_pa)
    : channels_(channels),
      use_ca_(use_ca),
      use_pa_(use_pa),
      head_(store, name + ".head", channels, channels, 3, same_padding(3)) {
  if (use_ca) ca_ = ChannelAttention(store, name + ".ca", channels);
  if (use_pa) pa_ = PixelAttention(store, name + ".pa", channels);
  tail_ = Conv2d(store, name + ".tail", channels, channels, 3, same_padding(3));
}

FeatureMap Cfa::operator()(const FeatureMap& f) const {
  check_channels(f, channels_, "cfa");
  Var x = silu(head_(f));
  if (use_ca_) x = ca_(x);
  if (use_pa_) x = pa_(x);
  return add(f, tail_(x));
}

Regia::Regia(ParamStore& store, const std::string& name, int channels, int factor, Resample upsample)
    : channels_(channels), factor_(factor), upsample_(upsample) {
  if (factor < 1) throw std::invalid_argument("regia: factor must be positive");
  // Latent grids are often 1x1 or 2x2, so the convs pad by replication:
  // zero borders would leave the outer taps untrained there.
  first_ = Conv2d(store, name + ".first", channels, channels, 3, ConvGeometry{1, 0, 1});
  second_ = Conv2d(store, name + ".second", channels, channels, 3, ConvGeometry{1, 0, 1});
}

Var Regia::latent_weights(const FeatureMap& f) const {
  check_channels(f, channels_, "regia");
  const Shape s = f.shape();
  const int ph = (factor_ - s.h % factor_) % factor_;
  const int pw = (factor_ - s.w % factor_) % factor_;
  const Var pooled = avg_pool(pad_replicate(f, {0, ph, 0, pw}), factor_);
  return sigmoid(second_(pad_replicate(silu(first_(pad_replicate(pooled, {1, 1, 1, 1}))), {1, 1, 1, 1})));
}

Var Regia::weights(const FeatureMap& f) const {
  const Shape s = f.shape();
  const Var latent = latent_weights(f);
  const Var up = resize(latent, latent.shape().h * factor_, latent.shape().w * factor_, upsample_);
  return crop(up, 0, 0, s.h, s.w);
}

FeatureMap Regia::operator()(const FeatureMap& f) const { return mul(f, weights(f)); }

Hcafe::Hcafe(ParamStore& store, const std::string& name, int channels) : channels_(channels) {
  if (channels < 2 || channels % 2 != 0) {
    throw std::invalid_argument("hcafe: channel count must be even, got " + std::to_string(channels));
  }
  for (int d = 1; d <= 3; ++d) {
    branch_[d - 1] = Conv2d(store, name + ".branch" + std::to_string(d), channels, channels / 2, 3,
                            same_padding(3, d));
  }
  fuse_ = Conv2d(store, name + ".fuse", 3 * (channels / 2), channels, 1);
}

FeatureMap Hcafe::operator()(const FeatureMap& f) const {
  check_channels(f, channels_, "hcafe");
  std::vector<Var> parts;
  parts.reserve(3);
  for (const Conv2d& b : branch_) parts.push_back(silu(b(f)));
  return add(f, fuse_(concat_channels(parts)));
}

Bica::Bica(ParamStore& store, const std::string& name, int channels, const BlockOptions& options)
    : channels_(channels), options_(options) {
  ln_gamma_ = store.create_constant(name + ".ln.gamma", {1, channels, 1, 1}, 1.0);
  ln_beta_ = store.create_constant(name + ".ln.beta", {1, channels, 1, 1}, 0.0);
  cfa_ = Cfa(store, name + ".cfa", channels, options.channel_attention, options.pixel_attention);
  if (options.regia) {
    regia_ = Regia(store, name + ".regia", channels, options.regia_factor, options.regia_upsample);
  }
  if (options.hcafe) hcafe_ = Hcafe(store, name + ".hcafe", channels);
  const int fused = options.hcafe ? 2 * channels : channels;
  fuse_ = Conv2d(store, name + ".fuse", fused, channels, 1);
}

FeatureMap Bica::operator()(const FeatureMap& f) const {
  check_channels(f, channels_, "bica");
  const Var x = layer_norm_channels(f, ln_gamma_, ln_beta_);
  Var branch1 = cfa_(x);
  if (options_.regia) branch1 = regia_(branch1);
  Var mixed = options_.hcafe ? concat_channels({branch1, hcafe_(x)}) : branch1;
  return add(f, fuse_(mixed));
}

}  // namespace smdris
