#include "smdris/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <json.hpp>
#include <opencv2/imgcodecs.hpp>

#include "smdris/rng.hpp"

namespace smdris {

bool is_image_file(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp" || ext == ".tif" || ext == ".tiff";
}

std::vector<fs::path> list_images(const fs::path& path) {
  if (fs::is_regular_file(path)) return {path};
  if (!fs::is_directory(path)) throw std::runtime_error("no such file or directory: " + path.string());
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(path)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end(), [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
  return out;
}

ScanResult scan_paired(const fs::path& root) {
  const fs::path raw_dir = root / "raw";
  const fs::path ref_dir = root / "reference";
  for (const fs::path& d : {raw_dir, ref_dir}) {
    if (!fs::is_directory(d)) throw std::runtime_error("dataset is missing directory " + d.string());
  }
  ScanResult result;
  auto by_stem = [&](const fs::path& dir) {
    std::map<std::string, fs::path> m;
    for (const fs::path& p : list_images(dir)) {
      if (!m.emplace(p.stem().string(), p).second) result.unmatched.push_back(p);
    }
    return m;
  };
  const auto raws = by_stem(raw_dir);
  const auto refs = by_stem(ref_dir);
  for (const auto& [stem, path] : raws) {
    const auto it = refs.find(stem);
    if (it == refs.end()) {
      result.unmatched.push_back(path);
    } else {
      result.pairs.push_back({path, it->second, stem});
    }
  }
  for (const auto& [stem, path] : refs) {
    if (raws.count(stem) == 0) result.unmatched.push_back(path);
  }
  if (result.pairs.empty()) throw std::runtime_error("no paired images under " + root.string());
  return result;
}

Tensor load_image(const fs::path& path) {
  const cv::Mat m = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (m.empty()) throw std::runtime_error("cannot decode image " + path.string());
  Tensor t({1, 3, m.rows, m.cols});
  for (int y = 0; y < m.rows; ++y) {
    const auto* row = m.ptr<cv::Vec3b>(y);
    for (int x = 0; x < m.cols; ++x) {
      for (int c = 0; c < 3; ++c) t.at(0, c, y, x) = row[x][2 - c] / 255.0;
    }
  }
  return t;
}

std::uint8_t quantize_byte(Real v) {
  if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("save_image: value outside [0, 1]; clamp before saving");
  return static_cast<std::uint8_t>(std::floor(v * 255.0 + 0.5));
}

void save_image(const Tensor& image, const fs::path& path) {
  const Shape& s = image.shape();
  if (s.n != 1 || s.c != 3) throw std::invalid_argument("save_image: expected {1,3,H,W}, got " + s.str());
  cv::Mat m(s.h, s.w, CV_8UC3);
  for (int y = 0; y < s.h; ++y) {
    auto* row = m.ptr<cv::Vec3b>(y);
    for (int x = 0; x < s.w; ++x) {
      for (int c = 0; c < 3; ++c) row[x][2 - c] = quantize_byte(image.at(0, c, y, x));
    }
  }
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), m);
  } catch (const cv::Exception& e) {
    throw std::runtime_error("cannot write image " + path.string() + ": " + e.what());
  }
  if (!ok) throw std::runtime_error("cannot write image " + path.string());
}

// ---------------------------------------------------------------------------

Tensor synth_uifm(const Tensor& clean, const UifmParams& p) {
  const Shape& s = clean.shape();
  const Shape& ts = p.t.shape();
  if (s.c != 3) throw std::invalid_argument("synth_uifm: expected RGB input, got " + s.str());
  if (ts.n != 1 || (ts.c != 1 && ts.c != 3) || ts.h != s.h || ts.w != s.w) {
    throw std::invalid_argument("synth_uifm: transmission " + ts.str() + " does not broadcast to " + s.str());
  }
  for (Real t : p.t.values()) {
    if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("synth_uifm: transmission outside [0, 1]");
  }
  for (Real a : p.ambient) {
    if (!(a >= 0.0 && a <= 1.0)) throw std::invalid_argument("synth_uifm: ambient light outside [0, 1]");
  }
  Tensor out(s);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < 3; ++c) {
      const Real* src = clean.plane(n, c);
      const Real* t = p.t.plane(0, ts.c == 1 ? 0 : c);
      Real* dst = out.plane(n, c);
      const Real A = p.ambient[static_cast<std::size_t>(c)];
      for (std::size_t i = 0; i < s.plane(); ++i) dst[i] = std::clamp(src[i] * t[i] + A * (1.0 - t[i]), 0.0, 1.0);
    }
  }
  return out;
}

TransmissionStyle parse_transmission_style(const std::string& name) {
  if (name == "uniform") return TransmissionStyle::uniform;
  if (name == "linear-gradient") return TransmissionStyle::linear_gradient;
  if (name == "radial") return TransmissionStyle::radial;
  if (name == "perlin-like") return TransmissionStyle::perlin;
  throw std::invalid_argument("unknown transmission style '" + name + "'");
}

const char* transmission_style_name(TransmissionStyle style) {
  switch (style) {
    case TransmissionStyle::uniform: return "uniform";
    case TransmissionStyle::linear_gradient: return "linear-gradient";
    case TransmissionStyle::radial: return "radial";
    case TransmissionStyle::perlin: return "perlin-like";
  }
  return "?";
}

namespace {

Real smoothstep(Real x) { return x * x * (3.0 - 2.0 * x); }

// Sum of bilinear-smoothstep value-noise octaves, unnormalized.
std::vector<Real> value_noise(int h, int w, Rng& rng) {
  std::vector<Real> field(static_cast<std::size_t>(h) * w, 0.0);
  Real amplitude = 1.0;
  for (int cells = 2; cells <= 8; cells *= 2) {
    const int gh = cells + 1, gw = cells + 1;
    std::vector<Real> lattice(static_cast<std::size_t>(gh) * gw);
    for (Real& v : lattice) v = rng.uniform();
    for (int y = 0; y < h; ++y) {
      const Real fy = (y + 0.5) / h * cells;
      const int iy = std::min(static_cast<int>(fy), cells - 1);
      const Real ty = smoothstep(fy - iy);
      for (int x = 0; x < w; ++x) {
        const Real fx = (x + 0.5) / w * cells;
        const int ix = std::min(static_cast<int>(fx), cells - 1);
        const Real tx = smoothstep(fx - ix);
        auto L = [&](int a, int b) { return lattice[static_cast<std::size_t>(a) * gw + b]; };
        const Real top = L(iy, ix) + tx * (L(iy, ix + 1) - L(iy, ix));
        const Real bot = L(iy + 1, ix) + tx * (L(iy + 1, ix + 1) - L(iy + 1, ix));
        field[static_cast<std::size_t>(y) * w + x] += amplitude * (top + ty * (bot - top));
      }
    }
    amplitude *= 0.5;
  }
  return field;
}

}  // namespace

Tensor make_transmission(int h, int w, const TransmissionSpec& spec) {
  if (h < 1 || w < 1) throw std::invalid_argument("make_transmission: dimensions must be positive");
  if (!(spec.t_min >= kMinTransmission && spec.t_max <= 1.0 && spec.t_min <= spec.t_max)) {
    throw std::invalid_argument("make_transmission: need 0.05 <= t_min <= t_max <= 1");
  }
  Rng rng(derive_seed(spec.seed, "transmission"));
  // depth in [0, 1]; t falls linearly from t_max to t_min with depth
  std::vector<Real> depth(static_cast<std::size_t>(h) * w, 0.0);
  switch (spec.style) {
    case TransmissionStyle::uniform: {
      const Real d = rng.uniform();
      std::fill(depth.begin(), depth.end(), d);
      break;
    }
    case TransmissionStyle::linear_gradient: {
      const Real theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const Real cx = std::cos(theta), sy = std::sin(theta);
      const Real lo = std::min(0.0, cx * (w - 1)) + std::min(0.0, sy * (h - 1));
      const Real hi = std::max(0.0, cx * (w - 1)) + std::max(0.0, sy * (h - 1));
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          depth[static_cast<std::size_t>(y) * w + x] = hi > lo ? (cx * x + sy * y - lo) / (hi - lo) : 0.0;
        }
      }
      break;
    }
    case TransmissionStyle::radial: {
      const Real cy = rng.uniform(0.0, h - 1.0), cx = rng.uniform(0.0, w - 1.0);
      Real reach = 0.0;
      for (Real yy : {0.0, h - 1.0}) {
        for (Real xx : {0.0, w - 1.0}) reach = std::max(reach, std::hypot(yy - cy, xx - cx));
      }
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          depth[static_cast<std::size_t>(y) * w + x] = reach > 0.0 ? std::hypot(y - cy, x - cx) / reach : 0.0;
        }
      }
      break;
    }
    case TransmissionStyle::perlin: {
      depth = value_noise(h, w, rng);
      const auto [mn, mx] = std::minmax_element(depth.begin(), depth.end());
      const Real lo = *mn, span = *mx - *mn;
      for (Real& d : depth) d = span > 0.0 ? (d - lo) / span : 0.5;
      break;
    }
  }
  const int channels = spec.channel_wise ? 3 : 1;
  Tensor t({1, channels, h, w});
  for (int c = 0; c < channels; ++c) {
    Real* dst = t.plane(0, c);
    for (std::size_t i = 0; i < depth.size(); ++i) {
      const Real base = spec.t_max - (spec.t_max - spec.t_min) * std::clamp(depth[i], 0.0, 1.0);
      dst[i] = spec.channel_wise
                   ? std::clamp(std::pow(base, kChannelAttenuation[static_cast<std::size_t>(c)]), kMinTransmission, 1.0)
                   : base;
    }
  }
  return t;
}

Tensor procedural_image(int size, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "scene"));
  auto color = [&] { return std::array<Real, 3>{rng.uniform(0.1, 0.95), rng.uniform(0.1, 0.95), rng.uniform(0.1, 0.95)}; };
  Tensor img({1, 3, size, size});
  const auto c0 = color(), c1 = color();
  const Real theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const Real s = 0.5 + 0.5 * ((x - size / 2.0) * std::cos(theta) + (y - size / 2.0) * std::sin(theta)) / size;
      for (int c = 0; c < 3; ++c) {
        img.at(0, c, y, x) = c0[static_cast<std::size_t>(c)] + (c1[static_cast<std::size_t>(c)] - c0[static_cast<std::size_t>(c)]) * s;
      }
    }
  }
  const int shapes = rng.uniform_int(3, 6);
  for (int k = 0; k < shapes; ++k) {
    const auto col = color();
    const bool circle = rng.uniform() < 0.5;
    const Real cy = rng.uniform(0.0, size), cx = rng.uniform(0.0, size);
    const Real ry = rng.uniform(0.08, 0.3) * size, rx = rng.uniform(0.08, 0.3) * size;
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const Real dy = (y - cy) / ry, dx = (x - cx) / rx;
        const bool inside = circle ? dy * dy + dx * dx <= 1.0 : std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0;
        if (!inside) continue;
        for (int c = 0; c < 3; ++c) img.at(0, c, y, x) = col[static_cast<std::size_t>(c)];
      }
    }
  }
  const Real fy = rng.uniform(0.1, 0.6), fx = rng.uniform(0.1, 0.6), phase = rng.uniform(0.0, 6.3);
  const auto mix = color();
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const Real wave = 0.06 * std::sin(fy * y + fx * x + phase);
      for (int c = 0; c < 3; ++c) {
        Real& v = img.at(0, c, y, x);
        v = std::clamp(v + wave * mix[static_cast<std::size_t>(c)], 0.0, 1.0);
      }
    }
  }
  for (Real& v : img.values()) v = quantize_byte(v) / 255.0;
  return img;
}

// ---------------------------------------------------------------------------

std::string SyntheticManifest::to_json() const {
  nlohmann::json j;
  j["schema_version"] = kSchemaVersion;
  j["generator"] = "uifm";
  j["size"] = size;
  j["seed"] = seed;
  j["samples"] = nlohmann::json::array();
  for (const SyntheticSample& s : samples) {
    j["samples"].push_back({
        {"id", s.id},
        {"scene_seed", s.scene_seed},
        {"style", transmission_style_name(s.transmission.style)},
        {"t_min", s.transmission.t_min},
        {"t_max", s.transmission.t_max},
        {"channel_wise", s.transmission.channel_wise},
        {"transmission_seed", s.transmission.seed},
        {"ambient", s.ambient},
    });
  }
  return j.dump(2) + "\n";
}

SyntheticManifest SyntheticManifest::from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  const int version = j.at("schema_version").get<int>();
  if (version != kSchemaVersion) {
    throw std::runtime_error("manifest schema version " + std::to_string(version) + " is not supported");
  }
  SyntheticManifest m;
  m.size = j.at("size").get<int>();
  m.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& s : j.at("samples")) {
    SyntheticSample out;
    out.id = s.at("id").get<std::string>();
    out.scene_seed = s.at("scene_seed").get<std::uint64_t>();
    out.transmission.style = parse_transmission_style(s.at("style").get<std::string>());
    out.transmission.t_min = s.at("t_min").get<Real>();
    out.transmission.t_max = s.at("t_max").get<Real>();
    out.transmission.channel_wise = s.at("channel_wise").get<bool>();
    out.transmission.seed = s.at("transmission_seed").get<std::uint64_t>();
    out.ambient = s.at("ambient").get<std::array<Real, 3>>();
    m.samples.push_back(std::move(out));
  }
  return m;
}

SyntheticManifest SyntheticManifest::load(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read manifest " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return from_json(ss.str());
}

Tensor rederive_degraded(const Tensor& clean, const SyntheticSample& sample) {
  const Shape& s = clean.shape();
  return synth_uifm(clean, {make_transmission(s.h, s.w, sample.transmission), sample.ambient});
}

SyntheticManifest emit_synthetic_dataset(int n, int size, std::uint64_t seed, const fs::path& out_root) {
  if (n < 1) throw std::invalid_argument("synthetic dataset: n must be at least 1");
  if (size < 24 || size % 24 != 0) {
    throw std::invalid_argument("synthetic dataset: size " + std::to_string(size) + " must be a positive multiple of 24");
  }
  static constexpr TransmissionStyle kStyles[] = {TransmissionStyle::perlin, TransmissionStyle::linear_gradient,
                                                  TransmissionStyle::radial, TransmissionStyle::uniform};
  SyntheticManifest manifest;
  manifest.size = size;
  manifest.seed = seed;
  fs::create_directories(out_root / "raw");
  fs::create_directories(out_root / "reference");
  for (int i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, "sample/" + std::to_string(i)));
    SyntheticSample s;
    std::ostringstream id;
    id << std::setw(4) << std::setfill('0') << i;
    s.id = id.str();
    s.scene_seed = rng.next();
    s.transmission.style = kStyles[i % 4];
    s.transmission.t_min = rng.uniform(0.45, 0.6);
    s.transmission.t_max = rng.uniform(0.85, 0.97);
    s.transmission.channel_wise = true;
    s.transmission.seed = rng.next();
    s.ambient = {rng.uniform(0.05, 0.25), rng.uniform(0.45, 0.75), rng.uniform(0.55, 0.85)};

    const Tensor clean = procedural_image(size, s.scene_seed);
    save_image(clean, out_root / "reference" / (s.id + ".png"));
    save_image(rederive_degraded(clean, s), out_root / "raw" / (s.id + ".png"));
    manifest.samples.push_back(std::move(s));
  }
  std::ofstream os(out_root / "manifest.json", std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write manifest under " + out_root.string());
  os << manifest.to_json();
  if (!os) throw std::runtime_error("cannot write manifest under " + out_root.string());
  return manifest;
}

}  // namespace smdris
