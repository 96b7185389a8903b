#pragma once

// The multi-stage restoration network.
//
// Stage 1 ("or") runs at full resolution with a four-level encoder/decoder;
// stage k+1 ("2D", "4D", "8D") runs on the 1/2^k pyramid level and skips the
// first k encoder levels, so its level-k features line up spatially with the
// original stage's level-k features. Low stages feed the original stage
// through three kinds of cross-stage links:
//
//   en      low encoder (first level)  -> original encoder, same level
//   en2de   low encoder (first level)  -> original decoder, same level
//   de      low decoder (final block)  -> original decoder, same level
//
// Each link is an ASISF gate with the original-stage feature as reference
// when its flag is on, and a plain additive transfer when it is off.
// Every stage ends in a 3x3 restoration conv added onto its input image.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "smdris/asisf.hpp"
#include "smdris/blocks.hpp"
#include "smdris/kv_config.hpp"
#include "smdris/pyramid.hpp"

namespace smdris {

struct ModelConfig {
  int stages = 4;
  int base_channels = 16;
  // Per-level widths; empty means base_channels * 2^level.
  std::vector<int> channel_plan;
  int regia_factor = 6;
  Resample regia_upsample = Resample::bilinear;
  int blocks_per_level = 1;
  bool enable_cfa_ca = true;
  bool enable_cfa_pa = true;
  bool enable_regia = true;
  bool enable_hcafe = true;
  bool enable_asisf_en = true;
  bool enable_asisf_en_to_de = true;
  bool enable_asisf_de = true;
  // Zero the restoration heads so a fresh model is the identity map.
  bool identity_heads = false;
  std::uint64_t init_seed = 0;

  int width(int level) const;
  // Spatial multiple that inference pads to: lcm(8, regia_factor).
  int padding_multiple() const;
  BlockOptions block_options() const;
  void validate() const;

  KvPairs to_pairs() const;
  std::string to_text() const { return format_kv(to_pairs()); }
  std::uint64_t hash() const;
  // Reads the keys of to_pairs(); other keys are left for the caller.
  static ModelConfig from_reader(KvReader& reader);
  static ModelConfig from_text(const std::string& text);
};

struct RestorationOutput {
  std::vector<Tensor> outputs;  // one per stage at scale 1/2^k
};

struct BlockReport {
  std::string name;
  std::string kind;
  int level = 0;
  int in_channels = 0;
  int out_channels = 0;
  std::size_t parameters = 0;
};

struct StructureReport {
  std::vector<BlockReport> blocks;
  std::size_t total_parameters = 0;
  std::string to_text() const;
};

class Model {
 public:
  explicit Model(const ModelConfig& config);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

  // Unclamped outputs with the autograd graph recorded (training).
  std::vector<Var> forward_train(const ScalePyramid& pyramid) const;
  // Gradient-free, outputs clamped to [0, 1] (evaluation).
  RestorationOutput forward(const ScalePyramid& pyramid) const;
  // Any-size restoration: pad, run, take stage 1, crop, clamp.
  Tensor infer_full(const Tensor& image) const;

  StructureReport describe() const;

 private:
  struct Level {
    std::optional<Conv2d> resample;  // down (stride 2) or up (after bilinear x2)
    std::vector<Bica> blocks;
  };
  struct Stage {
    int first_level = 0;
    std::string tag;
    Conv2d fe;
    std::map<int, Level> encoder;  // by level
    std::map<int, Level> decoder;  // up nodes by level
    Level final_node;
    Conv2d fr;
  };
  struct CrossLinks {
    std::optional<Asisf> en;
    std::optional<Asisf> en_to_de;
    std::optional<Asisf> de;
  };
  struct StageResult {
    Var encoder_first;
    Var decoder_final;
    Var output;
  };

  void check_pyramid(const ScalePyramid& pyramid) const;
  std::vector<Var> run(const std::vector<Var>& inputs) const;
  StageResult run_stage(const Stage& stage, const Var& input,
                        const std::vector<StageResult>* low) const;
  Var chain(const std::vector<Bica>& blocks, Var x) const;
  void record(const std::string& name, const std::string& kind, int level, int in, int out);

  ModelConfig config_;
  ParamStore store_;
  std::vector<Stage> stages_;
  std::map<int, CrossLinks> cross_;  // by level of the low stage feeding it
  std::vector<BlockReport> layout_;
};

Model build_model(const ModelConfig& config);

inline const char* stage_tag(int stage_index) {
  static const char* const tags[] = {"or", "2D", "4D", "8D"};
  return tags[stage_index];
}

/// Single-file model archive: format version, model config text (hash
/// verified on load), optional trainer state text, and named tensors.
struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;
  std::string model_config;
  std::string train_state;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Checkpoint make_checkpoint(const Model& model);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const std::filesystem::path& path);
// Copies the checkpoint's parameters into the model after validating that
// every parameter is present with a matching shape; the model is untouched on error.
void restore_parameters(Model& model, const Checkpoint& checkpoint);
Model load_model(const std::filesystem::path& path);

}  // namespace smdris
