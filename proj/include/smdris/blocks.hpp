#pragma once

// Attention blocks of the bifocal encoder/decoder unit.
//
// Every block is constructed against a ParamStore under a name prefix and is
// immutable afterwards except through its parameter tensors. Each forward is
// shape-preserving: {B, C, H, W} in, {B, C, H, W} out.

#include <string>

#include "smdris/nn.hpp"

namespace smdris {

using FeatureMap = Var;

struct BlockOptions {
  bool channel_attention = true;
  bool pixel_attention = true;
  bool regia = true;
  bool hcafe = true;
  int regia_factor = 6;
  Resample regia_upsample = Resample::bilinear;
};

/// Squeeze-excite gate: global pool -> 1x1 bottleneck -> SiLU -> 1x1 -> sigmoid.
class ChannelAttention {
 public:
  ChannelAttention() = default;
  ChannelAttention(ParamStore& store, const std::string& name, int channels);

  // {B, C, 1, 1} gate in (0, 1).
  Var gate(const FeatureMap& f) const;
  FeatureMap operator()(const FeatureMap& f) const;

 private:
  int channels_ = 0;
  Conv2d squeeze_;
  Conv2d excite_;
};

/// Spatial gate shared across channels: 1x1 -> SiLU -> 1x1 (to one map) -> sigmoid.
class PixelAttention {
 public:
  PixelAttention() = default;
  PixelAttention(ParamStore& store, const std::string& name, int channels);

  // {B, 1, H, W} gate in (0, 1).
  Var gate(const FeatureMap& f) const;
  FeatureMap operator()(const FeatureMap& f) const;

 private:
  int channels_ = 0;
  Conv2d reduce_;
  Conv2d project_;
};

/// Comprehensive feature attention: f + tail(PA(CA(SiLU(head(f))))).
class Cfa {
 public:
  Cfa() = default;
  Cfa(ParamStore& store, const std::string& name, int channels, bool use_ca = true, bool use_pa = true);

  FeatureMap operator()(const FeatureMap& f) const;
  Conv2d& head() { return head_; }
  Conv2d& tail() { return tail_; }

 private:
  int channels_ = 0;
  bool use_ca_ = true;
  bool use_pa_ = true;
  Conv2d head_;
  ChannelAttention ca_;
  PixelAttention pa_;
  Conv2d tail_;
};

/// Resolution-guided attention. The input is edge-padded (bottom/right) to a
/// multiple of `factor`, average-pooled by `factor`, turned into a sigmoid
/// weight field by two 3x3 convolutions, resampled back and cropped, then
/// multiplied into the input.
class Regia {
 public:
  Regia() = default;
  Regia(ParamStore& store, const std::string& name, int channels, int factor,
        Resample upsample = Resample::bilinear);

  // Sigmoid weights on the pooled grid, {B, C, ceil(H/f), ceil(W/f)}.
  Var latent_weights(const FeatureMap& f) const;
  // Weights resampled to the input's spatial extent.
  Var weights(const FeatureMap& f) const;
  FeatureMap operator()(const FeatureMap& f) const;
  int factor() const { return factor_; }

 private:
  int channels_ = 0;
  int factor_ = 1;
  Resample upsample_ = Resample::bilinear;
  Conv2d first_;
  Conv2d second_;
};

/// Hierarchical context extraction: three 3x3 branches at dilation 1, 2, 3
/// (receptive fields 3, 5, 7), each C/2 wide, fused by a 1x1 conv plus residual.
class Hcafe {
 public:
  Hcafe() = default;
  Hcafe(ParamStore& store, const std::string& name, int channels);

  FeatureMap operator()(const FeatureMap& f) const;
  Conv2d& fuse() { return fuse_; }

 private:
  int channels_ = 0;
  Conv2d branch_[3];
  Conv2d fuse_;
};

/// Two-branch block: LN(f) feeds CFA -> ReGIA and HCAFE; the branch outputs
/// are concatenated, mixed by a 1x1 conv and added back onto f.
/// Disabled sub-blocks are absent (not bypassed with parameters).
class Bica {
 public:
  Bica() = default;
  Bica(ParamStore& store, const std::string& name, int channels, const BlockOptions& options = {});

  FeatureMap operator()(const FeatureMap& f) const;
  Conv2d& fuse() { return fuse_; }
  int channels() const { return channels_; }

 private:
  int channels_ = 0;
  BlockOptions options_{};
  Var ln_gamma_;
  Var ln_beta_;
  Cfa cfa_;
  Regia regia_;
  Hcafe hcafe_;
  Conv2d fuse_;
};

}  // namespace smdris
