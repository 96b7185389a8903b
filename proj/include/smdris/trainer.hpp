#pragma once

// Seeded training loop, resume, dataset evaluation and the ablation runner.

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "smdris/data_io.hpp"
#include "smdris/losses.hpp"
#include "smdris/metrics.hpp"
#include "smdris/network.hpp"

namespace smdris {

struct TrainConfig {
  std::string profile = "desk";
  ModelConfig model;
  Real lr = 2e-4;
  Real beta1 = 0.9;
  Real beta2 = 0.999;
  Real adam_eps = 1e-8;
  int batch_size = 4;
  int crop = 64;
  int iterations = 500;
  std::uint64_t seed = 0;
  LossFlags loss;
  std::string extractor = "random";
  fs::path data_root;
  // Empty: no checkpoints and no log file.
  fs::path checkpoint_dir;
  // Checkpoint cadence in iterations; 0 writes only the final checkpoint.
  int eval_every = 0;

  static TrainConfig desk();
  static TrainConfig paper();
  static TrainConfig for_profile(const std::string& name);

  void validate() const;
  KvPairs to_pairs() const;
  std::string to_text() const { return format_kv(to_pairs()); }
  // Starts from the profile named by the "profile" key (desk by default) and
  // applies every other key; unknown keys are an error.
  static TrainConfig from_text(const std::string& text);
  // Applies "key = value" overrides on top of this config.
  void apply(const std::map<std::string, std::string>& overrides);
};

// Keys whose values differ, formatted "key: a -> b", one per line. Keys that
// only steer bookkeeping (iterations, paths, cadence) are ignored when
// `resumable_only` is set.
std::string config_diff(const TrainConfig& a, const TrainConfig& b, bool resumable_only);

struct TrainLogRecord {
  int iteration = 0;
  LossReport loss;
  Real seconds = 0.0;
  std::string to_json() const;
};

class TrainingAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainResult {
  Model model;
  std::vector<TrainLogRecord> log;
  fs::path final_checkpoint;  // empty when checkpoint_dir is empty
};

struct PairedImages {
  std::vector<std::string> ids;
  std::vector<Tensor> raw;
  std::vector<Tensor> reference;
};
PairedImages load_paired(const fs::path& root);

// Optional per-iteration observer (progress printing).
using TrainObserver = std::function<void(const TrainLogRecord&)>;

TrainResult train(const TrainConfig& cfg, const TrainObserver& observer = {});
TrainResult train(const TrainConfig& cfg, const PairedImages& data, const TrainObserver& observer = {});
// Continues the run stored in `checkpoint` up to cfg.iterations. Refuses with
// a diff report when cfg is incompatible with the stored configuration.
TrainResult resume(const fs::path& checkpoint, const TrainConfig& cfg, const TrainObserver& observer = {});
TrainResult resume(const fs::path& checkpoint, const TrainConfig& cfg, const PairedImages& data,
                   const TrainObserver& observer = {});
// TrainConfig stored in a training checkpoint.
TrainConfig stored_config(const Checkpoint& checkpoint);

// One training batch for iteration `iteration` (0-based); a pure function of
// (cfg.seed, iteration) so resumed runs see the same samples.
std::pair<Tensor, Tensor> sample_batch(const TrainConfig& cfg, const PairedImages& data, int iteration);

// Per-image restoration and metrics. Unreadable images are skipped and counted.
EvalTable evaluate(const Model& model, const fs::path& dataset_root, const EvalOptions& options,
                   std::vector<std::string>* warnings = nullptr);

enum class AblationMatrix { stages, bica, asisf, loss };
AblationMatrix parse_ablation_matrix(const std::string& name);
const char* ablation_matrix_name(AblationMatrix m);

struct AblationRow {
  std::string label;  // e.g. "CA=0 PA=1 ReGIA=1 HCAFE=1"
  TrainConfig config;
  std::size_t parameters = 0;
  Real final_loss = 0.0;
  Real psnr = 0.0;
  Real ssim = 0.0;
  Real all = 0.0;  // psnr + ssim
};

// Row configurations of a matrix, in table order (full model last).
std::vector<AblationRow> ablation_rows(const TrainConfig& base, AblationMatrix matrix);

struct AblationTable {
  AblationMatrix matrix = AblationMatrix::stages;
  std::vector<AblationRow> rows;
  std::string to_text() const;
  void write_csv(const fs::path& path) const;
};

AblationTable run_ablation_matrix(const TrainConfig& base, AblationMatrix matrix, const PairedImages& train_set,
                                  const PairedImages& val_set,
                                  const std::function<void(const AblationRow&)>& on_row = {});

}  // namespace smdris
