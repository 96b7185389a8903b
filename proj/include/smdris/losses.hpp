#pragma once

// Per-stage restoration loss (L1 + 0.2 perceptual + MSE) summed over stages.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "smdris/nn.hpp"
#include "smdris/pyramid.hpp"

namespace smdris {

inline constexpr Real kPerceptualWeight = 0.2;

/// Fixed feature network whose tapped activations define the perceptual loss.
/// Parameters never receive gradients and never change after construction.
class PerceptualExtractor {
 public:
  virtual ~PerceptualExtractor() = default;

  virtual std::string name() const = 0;
  // Smallest spatial extent the tap structure accepts.
  virtual int min_size() const = 0;
  // Tapped features of an image batch in [0, 1]; input normalization is applied inside.
  virtual std::vector<Var> features(const Var& image) const = 0;

  std::vector<Tensor> features(const Tensor& image) const;
  // Hash of every parameter bit; used to confirm the extractor stays frozen.
  virtual std::uint64_t fingerprint() const = 0;
};

/// Three-tap random conv extractor (3->8, pool, 8->16, pool, 16->32, SiLU after
/// each conv). Deterministic in its seed; identity input normalization.
class RandomConvExtractor final : public PerceptualExtractor {
 public:
  explicit RandomConvExtractor(std::uint64_t seed = 0x5eedULL);

  std::string name() const override { return "random"; }
  int min_size() const override { return 4; }
  std::vector<Var> features(const Var& image) const override;
  using PerceptualExtractor::features;
  std::uint64_t fingerprint() const override;

 private:
  ParamStore store_;
  Conv2d conv1_, conv2_, conv3_;
};

/// VGG16 feature stack up to relu3_3 with taps relu1_2, relu2_2, relu3_3 and
/// ImageNet input normalization. Weights come from a float32 blob written by
/// tools/export_vgg16.py.
class Vgg16Extractor final : public PerceptualExtractor {
 public:
  explicit Vgg16Extractor(const std::filesystem::path& weights);

  // $SMDRIS_CACHE/vgg16_features.bin, or an empty path when the variable is unset.
  static std::filesystem::path default_weights_path();

  std::string name() const override { return "vgg16"; }
  int min_size() const override { return 4; }
  std::vector<Var> features(const Var& image) const override;
  using PerceptualExtractor::features;
  std::uint64_t fingerprint() const override;

 private:
  ParamStore store_;
  std::vector<Conv2d> convs_;
};

// "random" or "vgg16"; throws std::invalid_argument for anything else.
std::unique_ptr<PerceptualExtractor> make_extractor(const std::string& kind, std::uint64_t seed = 0x5eedULL);

struct LossFlags {
  bool l1 = true;
  bool perceptual = true;
  bool mse = true;
};

struct StageLoss {
  Real l1 = 0.0;
  Real perceptual = 0.0;
  Real mse = 0.0;
  Real combined = 0.0;
};

struct LossReport {
  std::vector<StageLoss> per_stage;
  Real total = 0.0;

  // combined_i and total agree with their defining sums within `rel` relative.
  bool consistent(Real rel = 1e-6) const;
};

// Differentiable terms; every one is mean-reduced except perceptual, which is
// the sum over taps of squared feature distance / (H_i * W_i), averaged over the batch.
Var l1_loss(const Var& pred, const Tensor& target);
Var mse_loss(const Var& pred, const Tensor& target);
Var perceptual_loss(const Var& pred, const Tensor& target, const PerceptualExtractor& ext);

Real l1_loss(const Tensor& pred, const Tensor& target);
Real mse_loss(const Tensor& pred, const Tensor& target);
Real perceptual_loss(const Tensor& pred, const Tensor& target, const PerceptualExtractor& ext);

StageLoss combine_stage(Real l1, Real perceptual, Real mse);

struct StageLossVar {
  Var combined;
  StageLoss values;
};
StageLossVar stage_loss(const Var& pred, const Tensor& target, const PerceptualExtractor& ext,
                        const LossFlags& flags = {});

struct TotalLoss {
  Var total;
  LossReport report;
};
// Disabled terms are never computed and report exactly 0.
TotalLoss total_loss(const std::vector<Var>& outputs, const ScalePyramid& targets,
                     const PerceptualExtractor& ext, const LossFlags& flags = {});
LossReport total_loss(const std::vector<Tensor>& outputs, const ScalePyramid& targets,
                      const PerceptualExtractor& ext, const LossFlags& flags = {});

}  // namespace smdris
