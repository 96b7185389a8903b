#include "smdris/losses.hpp"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "smdris/rng.hpp"

namespace smdris {

namespace {

void freeze(ParamStore& store) {
  for (const auto& e : store.entries()) e.var.node()->requires_grad = false;
}

std::uint64_t hash_store(const ParamStore& store) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& e : store.entries()) {
    const Tensor& t = e.var.value();
    h = derive_seed(h, fnv1a64(e.name));
    h = derive_seed(h, fnv1a64(std::string_view(reinterpret_cast<const char*>(t.data()), t.numel() * sizeof(Real))));
  }
  return h;
}

void require_same(const Shape& a, const Shape& b, const char* what) {
  if (!(a == b)) throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.str() + " vs " + b.str());
}

void require_extent(const Shape& s, const PerceptualExtractor& ext) {
  if (s.h < ext.min_size() || s.w < ext.min_size()) {
    throw std::invalid_argument("perceptual_loss: input " + s.str() + " is smaller than the " + ext.name() +
                                " extractor minimum of " + std::to_string(ext.min_size()));
  }
}

}  // namespace

std::vector<Tensor> PerceptualExtractor::features(const Tensor& image) const {
  NoGradGuard guard;
  std::vector<Tensor> out;
  for (const Var& f : features(Var(image, false))) out.push_back(f.value());
  return out;
}

// ---------------------------------------------------------------------------

namespace {

// Floor-mode 2x2 pooling: an odd trailing row or column is dropped.
Var pool2(const Var& x) {
  const Shape& s = x.value().shape();
  const Var even = (s.h % 2 || s.w % 2) ? crop(x, 0, 0, s.h / 2 * 2, s.w / 2 * 2) : x;
  return avg_pool(even, 2);
}

}  // namespace

RandomConvExtractor::RandomConvExtractor(std::uint64_t seed)
    : store_(seed),
      conv1_(store_, "pre.conv1", 3, 8, 3, same_padding(3)),
      conv2_(store_, "pre.conv2", 8, 16, 3, same_padding(3)),
      conv3_(store_, "pre.conv3", 16, 32, 3, same_padding(3)) {
  freeze(store_);
}

std::vector<Var> RandomConvExtractor::features(const Var& image) const {
  const Var f1 = silu(conv1_(image));
  const Var f2 = silu(conv2_(pool2(f1)));
  const Var f3 = silu(conv3_(pool2(f2)));
  return {f1, f2, f3};
}

std::uint64_t RandomConvExtractor::fingerprint() const { return hash_store(store_); }

// ---------------------------------------------------------------------------

namespace {

struct VggLayer {
  int in;
  int out;
  bool tap;         // relu output is a tap
  bool pool_after;  // 2x2 max pool in VGG; average pool here
};

// conv1_1 .. conv3_3
constexpr VggLayer kVggLayers[] = {
    {3, 64, false, false},   {64, 64, true, true},     {64, 128, false, false}, {128, 128, true, true},
    {128, 256, false, false}, {256, 256, false, false}, {256, 256, true, false},
};

constexpr char kVggMagic[8] = {'S', 'M', 'D', 'R', 'V', 'G', 'G', '1'};

}  // namespace

std::filesystem::path Vgg16Extractor::default_weights_path() {
  const char* cache = std::getenv("SMDRIS_CACHE");
  if (cache == nullptr || *cache == '\0') return {};
  return std::filesystem::path(cache) / "vgg16_features.bin";
}

Vgg16Extractor::Vgg16Extractor(const std::filesystem::path& weights) {
  std::ifstream is(weights, std::ios::binary);
  if (!is) throw std::runtime_error("vgg16 extractor: cannot open weights " + weights.string());
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kVggMagic, sizeof magic) != 0) {
    throw std::runtime_error("vgg16 extractor: " + weights.string() + " is not a vgg16 feature blob");
  }
  int index = 0;
  for (const VggLayer& layer : kVggLayers) {
    Conv2d conv(store_, "vgg.conv" + std::to_string(index++), layer.in, layer.out, 3, same_padding(3));
    for (Tensor* t : {&conv.weight().mutable_value(), &conv.bias()->mutable_value()}) {
      std::vector<float> buf(t->numel());
      is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
      if (!is) throw std::runtime_error("vgg16 extractor: weight blob truncated");
      for (std::size_t i = 0; i < buf.size(); ++i) (*t)[i] = buf[i];
    }
    convs_.push_back(std::move(conv));
  }
  freeze(store_);
}

std::vector<Var> Vgg16Extractor::features(const Var& image) const {
  static const Real mean[3] = {0.485, 0.456, 0.406};
  static const Real stdev[3] = {0.229, 0.224, 0.225};
  Tensor shift({1, 3, 1, 1});
  Tensor gain({1, 3, 1, 1});
  for (int c = 0; c < 3; ++c) {
    shift[static_cast<std::size_t>(c)] = -mean[c];
    gain[static_cast<std::size_t>(c)] = 1.0 / stdev[c];
  }
  Var x = mul(add(image, Var(shift)), Var(gain));
  std::vector<Var> taps;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    x = relu(convs_[i](x));
    if (kVggLayers[i].tap) taps.push_back(x);
    if (kVggLayers[i].pool_after) x = pool2(x);
  }
  return taps;
}

std::uint64_t Vgg16Extractor::fingerprint() const { return hash_store(store_); }

std::unique_ptr<PerceptualExtractor> make_extractor(const std::string& kind, std::uint64_t seed) {
  if (kind == "random") return std::make_unique<RandomConvExtractor>(seed);
  if (kind == "vgg16") {
    const auto path = Vgg16Extractor::default_weights_path();
    if (path.empty()) throw std::runtime_error("vgg16 extractor needs SMDRIS_CACHE pointing at exported weights");
    return std::make_unique<Vgg16Extractor>(path);
  }
  throw std::invalid_argument("unknown perceptual extractor '" + kind + "' (expected random or vgg16)");
}

// ---------------------------------------------------------------------------

Var l1_loss(const Var& pred, const Tensor& target) {
  require_same(pred.shape(), target.shape(), "l1_loss");
  return mean_abs_diff(pred, target);
}

Var mse_loss(const Var& pred, const Tensor& target) {
  require_same(pred.shape(), target.shape(), "mse_loss");
  return mean_sq_diff(pred, target);
}

Var perceptual_loss(const Var& pred, const Tensor& target, const PerceptualExtractor& ext) {
  require_same(pred.shape(), target.shape(), "perceptual_loss");
  require_extent(pred.shape(), ext);
  const std::vector<Tensor> want = ext.features(target);
  const std::vector<Var> got = ext.features(pred);
  std::vector<Var> terms;
  std::vector<Real> weights;
  for (std::size_t i = 0; i < got.size(); ++i) {
    const Shape& s = got[i].shape();
    terms.push_back(sum_sq_diff(got[i], want[i]));
    weights.push_back(1.0 / (static_cast<Real>(s.h) * s.w * s.n));
  }
  return weighted_sum(terms, weights);
}

Real l1_loss(const Tensor& pred, const Tensor& target) {
  NoGradGuard guard;
  return l1_loss(Var(pred), target).value()[0];
}

Real mse_loss(const Tensor& pred, const Tensor& target) {
  NoGradGuard guard;
  return mse_loss(Var(pred), target).value()[0];
}

Real perceptual_loss(const Tensor& pred, const Tensor& target, const PerceptualExtractor& ext) {
  NoGradGuard guard;
  return perceptual_loss(Var(pred), target, ext).value()[0];
}

StageLoss combine_stage(Real l1, Real perceptual, Real mse) {
  return {l1, perceptual, mse, l1 + kPerceptualWeight * perceptual + mse};
}

bool LossReport::consistent(Real rel) const {
  auto close = [rel](Real a, Real b) { return std::abs(a - b) <= rel * std::max({std::abs(a), std::abs(b), 1e-300}); };
  Real sum = 0.0;
  for (const StageLoss& s : per_stage) {
    if (!close(s.combined, s.l1 + kPerceptualWeight * s.perceptual + s.mse)) return false;
    sum += s.combined;
  }
  return close(total, sum) || (total == 0.0 && sum == 0.0);
}

StageLossVar stage_loss(const Var& pred, const Tensor& target, const PerceptualExtractor& ext,
                        const LossFlags& flags) {
  require_same(pred.shape(), target.shape(), "stage_loss");
  std::vector<Var> terms;
  std::vector<Real> weights;
  Real l1 = 0.0, pre = 0.0, mse = 0.0;
  if (flags.l1) {
    terms.push_back(l1_loss(pred, target));
    weights.push_back(1.0);
    l1 = terms.back().value()[0];
  }
  if (flags.perceptual) {
    terms.push_back(perceptual_loss(pred, target, ext));
    weights.push_back(kPerceptualWeight);
    pre = terms.back().value()[0];
  }
  if (flags.mse) {
    terms.push_back(mse_loss(pred, target));
    weights.push_back(1.0);
    mse = terms.back().value()[0];
  }
  StageLossVar out;
  out.values = combine_stage(l1, pre, mse);
  out.combined = terms.empty() ? Var(Tensor({1, 1, 1, 1}, 0.0)) : weighted_sum(terms, weights);
  return out;
}

TotalLoss total_loss(const std::vector<Var>& outputs, const ScalePyramid& targets, const PerceptualExtractor& ext,
                     const LossFlags& flags) {
  if (static_cast<int>(outputs.size()) > targets.size()) {
    throw std::invalid_argument("total_loss: " + std::to_string(outputs.size()) + " stage outputs but only " +
                                std::to_string(targets.size()) + " target levels");
  }
  TotalLoss out;
  std::vector<Var> stage_terms;
  for (std::size_t k = 0; k < outputs.size(); ++k) {
    StageLossVar s = stage_loss(outputs[k], targets[static_cast<int>(k)], ext, flags);
    out.report.per_stage.push_back(s.values);
    out.report.total += s.values.combined;
    stage_terms.push_back(s.combined);
  }
  out.total = weighted_sum(stage_terms, std::vector<Real>(stage_terms.size(), 1.0));
  return out;
}

LossReport total_loss(const std::vector<Tensor>& outputs, const ScalePyramid& targets,
                      const PerceptualExtractor& ext, const LossFlags& flags) {
  NoGradGuard guard;
  std::vector<Var> vars;
  for (const Tensor& t : outputs) vars.emplace_back(t, false);
  return total_loss(vars, targets, ext, flags).report;
}

}  // namespace smdris
