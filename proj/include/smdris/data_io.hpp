#pragma once

// Dataset layouts, 8-bit image codecs and the synthetic underwater
// degradation generator (observed = clean * t + A * (1 - t)).

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "smdris/tensor.hpp"

namespace smdris {

namespace fs = std::filesystem;

struct PairedSample {
  fs::path raw_path;
  fs::path reference_path;
  std::string id;
};

struct ScanResult {
  std::vector<PairedSample> pairs;  // sorted by id
  std::vector<fs::path> unmatched;  // files present on one side only
};

// Pairs <root>/raw/* with <root>/reference/* by filename stem.
ScanResult scan_paired(const fs::path& root);
// Image files directly inside `dir` (or the single file `dir`), sorted.
std::vector<fs::path> list_images(const fs::path& path);
bool is_image_file(const fs::path& path);

// {1, 3, H, W} in [0, 1]; grayscale is replicated to three channels.
Tensor load_image(const fs::path& path);
// Round-half-away 8-bit quantization; values must already lie in [0, 1].
void save_image(const Tensor& image, const fs::path& path);
std::uint8_t quantize_byte(Real v);

struct UifmParams {
  Tensor t;                       // {1, 1, H, W} or {1, 3, H, W}
  std::array<Real, 3> ambient{};  // A
};

// clean * t + A * (1 - t), clamped to [0, 1]. t broadcasts over batch (and
// channels when single-channel).
Tensor synth_uifm(const Tensor& clean, const UifmParams& params);

enum class TransmissionStyle { uniform, linear_gradient, radial, perlin };

TransmissionStyle parse_transmission_style(const std::string& name);
const char* transmission_style_name(TransmissionStyle style);

struct TransmissionSpec {
  TransmissionStyle style = TransmissionStyle::perlin;
  Real t_min = 0.45;
  Real t_max = 0.95;
  // Per-channel exponents applied as t_c = t^k_c (red attenuated most).
  bool channel_wise = true;
  std::uint64_t seed = 0;
};

inline constexpr std::array<Real, 3> kChannelAttenuation{1.6, 1.0, 0.75};
inline constexpr Real kMinTransmission = 0.05;

// {1, 1, h, w} field, or {1, 3, h, w} when channel_wise. Deterministic in spec.seed.
Tensor make_transmission(int h, int w, const TransmissionSpec& spec);

// Procedural clean scene (gradient background, shapes, texture), already
// quantized to the 8-bit grid.
Tensor procedural_image(int size, std::uint64_t seed);

struct SyntheticSample {
  std::string id;
  std::uint64_t scene_seed = 0;
  TransmissionSpec transmission;
  std::array<Real, 3> ambient{};
};

struct SyntheticManifest {
  static constexpr int kSchemaVersion = 1;
  int size = 0;
  std::uint64_t seed = 0;
  std::vector<SyntheticSample> samples;

  std::string to_json() const;
  static SyntheticManifest from_json(const std::string& text);
  static SyntheticManifest load(const fs::path& path);
};

// Writes raw/ (degraded), reference/ (clean) and manifest.json under out_root.
SyntheticManifest emit_synthetic_dataset(int n, int size, std::uint64_t seed, const fs::path& out_root);

// Degraded image re-derived from a manifest entry and its clean image.
Tensor rederive_degraded(const Tensor& clean, const SyntheticSample& sample);

}  // namespace smdris
