#include "smdris/network.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "smdris/rng.hpp"

namespace smdris {

// ---------------------------------------------------------------------------
// ModelConfig

int ModelConfig::width(int level) const {
  if (!channel_plan.empty()) return channel_plan.at(static_cast<std::size_t>(level));
  return base_channels << level;
}

int ModelConfig::padding_multiple() const { return std::lcm(8, regia_factor); }

BlockOptions ModelConfig::block_options() const {
  BlockOptions o;
  o.channel_attention = enable_cfa_ca;
  o.pixel_attention = enable_cfa_pa;
  o.regia = enable_regia;
  o.hcafe = enable_hcafe;
  o.regia_factor = regia_factor;
  o.regia_upsample = regia_upsample;
  return o;
}

void ModelConfig::validate() const {
  if (stages < 1 || stages > kPyramidLevels) {
    throw std::invalid_argument("model config: stages must be in [1, 4], got " + std::to_string(stages));
  }
  if (base_channels < 1) throw std::invalid_argument("model config: base_channels must be positive");
  if (!channel_plan.empty() && channel_plan.size() != static_cast<std::size_t>(kPyramidLevels)) {
    throw std::invalid_argument("model config: channel_plan needs exactly 4 widths");
  }
  for (int l = 0; l < kPyramidLevels; ++l) {
    const int w = width(l);
    if (w < 1) throw std::invalid_argument("model config: width at level " + std::to_string(l) + " must be positive");
    if (enable_hcafe && w % 2 != 0) {
      throw std::invalid_argument("model config: width " + std::to_string(w) + " must be even when HCAFE is enabled");
    }
  }
  if (regia_factor < 1) throw std::invalid_argument("model config: regia_factor must be positive");
  if (blocks_per_level < 1) throw std::invalid_argument("model config: blocks_per_level must be positive");
}

KvPairs ModelConfig::to_pairs() const {
  std::string plan;
  for (int l = 0; l < kPyramidLevels; ++l) plan += (l ? "," : "") + std::to_string(width(l));
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  return {
      {"stages", std::to_string(stages)},
      {"base_channels", std::to_string(base_channels)},
      {"channel_plan", plan},
      {"regia_factor", std::to_string(regia_factor)},
      {"regia_upsample", regia_upsample == Resample::bilinear ? "bilinear" : "nearest"},
      {"blocks_per_level", std::to_string(blocks_per_level)},
      {"enable_cfa_ca", b(enable_cfa_ca)},
      {"enable_cfa_pa", b(enable_cfa_pa)},
      {"enable_regia", b(enable_regia)},
      {"enable_hcafe", b(enable_hcafe)},
      {"enable_asisf_en", b(enable_asisf_en)},
      {"enable_asisf_en_to_de", b(enable_asisf_en_to_de)},
      {"enable_asisf_de", b(enable_asisf_de)},
      {"identity_heads", b(identity_heads)},
      {"init_seed", std::to_string(init_seed)},
  };
}

std::uint64_t ModelConfig::hash() const { return fnv1a64(to_text()); }

ModelConfig ModelConfig::from_reader(KvReader& r) {
  ModelConfig c;
  c.stages = r.get_int("stages", c.stages);
  c.base_channels = r.get_int("base_channels", c.base_channels);
  c.channel_plan = r.get_int_list("channel_plan", {});
  c.regia_factor = r.get_int("regia_factor", c.regia_factor);
  const std::string up = r.get_string("regia_upsample", "bilinear");
  if (up == "bilinear") {
    c.regia_upsample = Resample::bilinear;
  } else if (up == "nearest") {
    c.regia_upsample = Resample::nearest;
  } else {
    throw std::invalid_argument("model config: regia_upsample must be bilinear or nearest");
  }
  c.blocks_per_level = r.get_int("blocks_per_level", c.blocks_per_level);
  c.enable_cfa_ca = r.get_bool("enable_cfa_ca", c.enable_cfa_ca);
  c.enable_cfa_pa = r.get_bool("enable_cfa_pa", c.enable_cfa_pa);
  c.enable_regia = r.get_bool("enable_regia", c.enable_regia);
  c.enable_hcafe = r.get_bool("enable_hcafe", c.enable_hcafe);
  c.enable_asisf_en = r.get_bool("enable_asisf_en", c.enable_asisf_en);
  c.enable_asisf_en_to_de = r.get_bool("enable_asisf_en_to_de", c.enable_asisf_en_to_de);
  c.enable_asisf_de = r.get_bool("enable_asisf_de", c.enable_asisf_de);
  c.identity_heads = r.get_bool("identity_heads", c.identity_heads);
  c.init_seed = r.get_u64("init_seed", c.init_seed);
  // A plan that merely restates the base doubling is normalized away.
  bool derived = c.channel_plan.size() == static_cast<std::size_t>(kPyramidLevels);
  for (int l = 0; derived && l < kPyramidLevels; ++l) {
    derived = c.channel_plan[static_cast<std::size_t>(l)] == (c.base_channels << l);
  }
  if (derived) c.channel_plan.clear();
  c.validate();
  return c;
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  KvReader r(parse_kv_text(text));
  ModelConfig c = from_reader(r);
  r.reject_unknown("model config");
  return c;
}

// ---------------------------------------------------------------------------
// Model construction

Model::Model(const ModelConfig& config) : config_(config), store_(config.init_seed) {
  config_.validate();
  const BlockOptions opts = config_.block_options();
  const int S = config_.stages;
  auto bica_chain = [&](const std::string& name, int channels) {
    std::vector<Bica> blocks;
    for (int r = 0; r < config_.blocks_per_level; ++r) {
      blocks.emplace_back(store_, name + ".bica" + std::to_string(r), channels, opts);
    }
    return blocks;
  };

  // Low stages are built first so the layout lists them before the stages
  // that consume them; parameter values do not depend on this order.
  for (int s = 0; s < S; ++s) {
    Stage st;
    st.first_level = s;
    st.tag = stage_tag(s);
    const std::string fe = "FE_" + std::to_string(s + 1);
    st.fe = Conv2d(store_, fe, 3, config_.width(s), 3, same_padding(3));
    record(fe, "conv", s, 3, config_.width(s));
    for (int l = s; l < kPyramidLevels; ++l) {
      const std::string name = "E" + std::to_string(l + 1) + "_" + st.tag;
      Level level;
      if (l > s) {
        level.resample = Conv2d(store_, name + ".down", config_.width(l - 1), config_.width(l), 3, {2, 1, 1});
      }
      level.blocks = bica_chain(name, config_.width(l));
      record(name, l > s ? "down+bica" : "bica", l, config_.width(l > s ? l - 1 : l), config_.width(l));
      st.encoder.emplace(l, std::move(level));
    }
    for (int l = kPyramidLevels - 2; l >= s; --l) {
      const std::string name = "D" + std::to_string(l + 2) + "_" + st.tag;
      Level level;
      level.resample = Conv2d(store_, name + ".up", config_.width(l + 1), config_.width(l), 3, same_padding(3));
      level.blocks = bica_chain(name, config_.width(l));
      record(name, "up+bica", l, config_.width(l + 1), config_.width(l));
      st.decoder.emplace(l, std::move(level));
    }
    const std::string fin = "D1_" + st.tag;
    st.final_node.blocks = bica_chain(fin, config_.width(s));
    record(fin, "bica", s, config_.width(s), config_.width(s));
    const std::string fr = "FR_" + st.tag;
    st.fr = Conv2d(store_, fr, config_.width(s), 3, 3, same_padding(3));
    if (config_.identity_heads) st.fr.zero();
    record(fr, "conv", s, config_.width(s), 3);
    stages_.push_back(std::move(st));
  }

  for (int l = 1; l < S; ++l) {
    CrossLinks links;
    const int w = config_.width(l);
    const std::string tag = stage_tag(l);
    if (config_.enable_asisf_en) {
      links.en.emplace(store_, "S_en_" + tag, w, w, w);
      record("S_en_" + tag, "asisf", l, w, w);
    }
    if (config_.enable_asisf_en_to_de) {
      links.en_to_de.emplace(store_, "S_en2de_" + tag, w, w, w);
      record("S_en2de_" + tag, "asisf", l, w, w);
    }
    if (config_.enable_asisf_de) {
      links.de.emplace(store_, "S_de_" + tag, w, w, w);
      record("S_de_" + tag, "asisf", l, w, w);
    }
    cross_.emplace(l, std::move(links));
  }
}

void Model::record(const std::string& name, const std::string& kind, int level, int in, int out) {
  layout_.push_back({name, kind, level, in, out, 0});
}

Model build_model(const ModelConfig& config) { return Model(config); }

// ---------------------------------------------------------------------------
// Forward

Var Model::chain(const std::vector<Bica>& blocks, Var x) const {
  for (const Bica& b : blocks) x = b(x);
  return x;
}

namespace {

Var transfer(const std::optional<Asisf>& gate, const Var& feature, const Var& reference) {
  return gate ? (*gate)(feature, reference) : feature;
}

}  // namespace

Model::StageResult Model::run_stage(const Stage& stage, const Var& input,
                                    const std::vector<StageResult>* low) const {
  const int s = stage.first_level;
  const int S = config_.stages;
  auto has_low = [&](int l) { return low != nullptr && l >= 1 && l < S; };

  std::map<int, Var> skips;
  Var x = stage.fe(input);
  for (const auto& [l, level] : stage.encoder) {
    if (level.resample) x = (*level.resample)(x);
    if (has_low(l)) x = add(x, transfer(cross_.at(l).en, (*low)[l].encoder_first, x));
    x = chain(level.blocks, x);
    skips[l] = x;
  }
  StageResult result;
  result.encoder_first = skips.at(s);

  auto decoder_inflow = [&](int l, Var d) {
    if (!has_low(l)) return d;
    const CrossLinks& links = cross_.at(l);
    const Var ref = d;
    d = add(d, transfer(links.en_to_de, (*low)[l].encoder_first, ref));
    return add(d, transfer(links.de, (*low)[l].decoder_final, ref));
  };

  Var d = decoder_inflow(kPyramidLevels - 1, skips.at(kPyramidLevels - 1));
  for (int l = kPyramidLevels - 2; l >= s; --l) {
    const Level& level = stage.decoder.at(l);
    d = resize(d, d.shape().h * 2, d.shape().w * 2, Resample::bilinear);
    d = add((*level.resample)(d), skips.at(l));
    d = decoder_inflow(l, d);
    d = chain(level.blocks, d);
  }
  d = chain(stage.final_node.blocks, d);
  result.decoder_final = d;
  result.output = add(input, stage.fr(d));
  return result;
}

std::vector<Var> Model::run(const std::vector<Var>& inputs) const {
  const int S = config_.stages;
  std::vector<StageResult> results(static_cast<std::size_t>(S));
  for (int s = S - 1; s >= 1; --s) results[static_cast<std::size_t>(s)] = run_stage(stages_[static_cast<std::size_t>(s)], inputs[static_cast<std::size_t>(s)], nullptr);
  results[0] = run_stage(stages_[0], inputs[0], &results);
  std::vector<Var> out;
  out.reserve(results.size());
  for (StageResult& r : results) out.push_back(r.output);
  return out;
}

void Model::check_pyramid(const ScalePyramid& pyramid) const {
  if (pyramid.size() < config_.stages) {
    throw std::invalid_argument("forward: pyramid has " + std::to_string(pyramid.size()) +
                                " levels but the model has " + std::to_string(config_.stages) + " stages");
  }
  const Shape base = pyramid[0].shape();
  if (base.c != 3) throw std::invalid_argument("forward: expected 3-channel input, got " + base.str());
  if (base.h % 8 != 0 || base.w % 8 != 0) {
    throw std::invalid_argument("forward: level-0 extent " + std::to_string(base.h) + "x" +
                                std::to_string(base.w) + " is not divisible by 8");
  }
  for (int k = 1; k < config_.stages; ++k) {
    const Shape& s = pyramid[k].shape();
    if (s.n != base.n || s.c != 3 || s.h != base.h >> k || s.w != base.w >> k) {
      throw std::invalid_argument("forward: pyramid level " + std::to_string(k) + " has shape " + s.str());
    }
  }
}

std::vector<Var> Model::forward_train(const ScalePyramid& pyramid) const {
  check_pyramid(pyramid);
  std::vector<Var> inputs;
  for (int k = 0; k < config_.stages; ++k) inputs.emplace_back(pyramid[k], false);
  return run(inputs);
}

RestorationOutput Model::forward(const ScalePyramid& pyramid) const {
  NoGradGuard guard;
  const std::vector<Var> outs = forward_train(pyramid);
  RestorationOutput r;
  for (const Var& v : outs) {
    Tensor t = v.value();
    for (Real& x : t.values()) x = std::clamp(x, 0.0, 1.0);
    r.outputs.push_back(std::move(t));
  }
  return r;
}

Tensor Model::infer_full(const Tensor& image) const {
  if (image.shape().c != 3) throw std::invalid_argument("infer_full: expected 3-channel image");
  auto [padded, spec] = pad_to_multiple(image, config_.padding_multiple());
  const RestorationOutput out = forward(build_input_pyramid(padded));
  return crop_to_original(out.outputs[0], spec);
}

// ---------------------------------------------------------------------------
// Describe

StructureReport Model::describe() const {
  StructureReport r;
  r.blocks = layout_;
  for (BlockReport& b : r.blocks) {
    b.parameters = store_.count_with_prefix(b.name + ".");
    r.total_parameters += b.parameters;
  }
  return r;
}

std::string StructureReport::to_text() const {
  std::ostringstream os;
  os << std::left << std::setw(14) << "block" << std::setw(11) << "kind" << std::setw(7) << "level"
     << std::setw(12) << "channels" << "parameters\n";
  for (const BlockReport& b : blocks) {
    os << std::left << std::setw(14) << b.name << std::setw(11) << b.kind << std::setw(7) << b.level
       << std::setw(12) << (std::to_string(b.in_channels) + "->" + std::to_string(b.out_channels))
       << b.parameters << '\n';
  }
  os << "total " << total_parameters << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'S', 'M', 'D', 'R', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  template <typename T>
  void pod(T v) {
    bytes(&v, sizeof v);
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    bytes(s.data(), s.size());
  }
  std::vector<char>& buffer() { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  Reader(const char* data, std::size_t size) : p_(data), end_(data + size) {}
  void bytes(void* out, std::size_t n) {
    if (static_cast<std::size_t>(end_ - p_) < n) throw CheckpointError("checkpoint truncated");
    std::memcpy(out, p_, n);
    p_ += n;
  }
  template <typename T>
  T pod() {
    T v{};
    bytes(&v, sizeof v);
    return v;
  }
  std::string str(std::size_t limit) {
    const auto n = pod<std::uint64_t>();
    if (n > limit) throw CheckpointError("checkpoint string length out of range");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  bool done() const { return p_ == end_; }

 private:
  const char* p_;
  const char* end_;
};

std::uint64_t checksum(const char* data, std::size_t n) { return fnv1a64(std::string_view(data, n)); }

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [k, t] : tensors) {
    if (k == name) return &t;
  }
  return nullptr;
}

Checkpoint make_checkpoint(const Model& model) {
  Checkpoint c;
  c.model_config = model.config().to_text();
  for (const auto& e : model.params().entries()) c.tensors.emplace_back(e.name, e.var.value());
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.pod<std::uint32_t>(Checkpoint::kFormatVersion);
  w.pod<std::uint64_t>(fnv1a64(checkpoint.model_config));
  w.str(checkpoint.model_config);
  w.str(checkpoint.train_state);
  w.pod<std::uint64_t>(checkpoint.tensors.size());
  for (const auto& [name, t] : checkpoint.tensors) {
    w.str(name);
    const Shape& s = t.shape();
    w.pod<std::int32_t>(s.n);
    w.pod<std::int32_t>(s.c);
    w.pod<std::int32_t>(s.h);
    w.pod<std::int32_t>(s.w);
    w.bytes(t.data(), t.numel() * sizeof(Real));
  }
  const std::uint64_t sum = checksum(w.buffer().data(), w.buffer().size());
  w.pod(sum);

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw CheckpointError("cannot open " + tmp.string() + " for writing");
    os.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
    if (!os) throw CheckpointError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  constexpr std::size_t kTrailer = sizeof(std::uint64_t);
  if (buf.size() < sizeof kMagic + kTrailer || std::memcmp(buf.data(), kMagic, sizeof kMagic) != 0) {
    throw CheckpointError("not a checkpoint archive: " + path.string());
  }
  std::uint64_t stored_sum = 0;
  std::memcpy(&stored_sum, buf.data() + buf.size() - kTrailer, kTrailer);
  if (checksum(buf.data(), buf.size() - kTrailer) != stored_sum) {
    throw CheckpointError("checkpoint checksum mismatch (corrupt archive): " + path.string());
  }
  Reader r(buf.data() + sizeof kMagic, buf.size() - sizeof kMagic - kTrailer);
  const auto version = r.pod<std::uint32_t>();
  if (version != Checkpoint::kFormatVersion) {
    throw CheckpointError("unsupported checkpoint format version " + std::to_string(version));
  }
  const auto config_hash = r.pod<std::uint64_t>();
  Checkpoint c;
  c.model_config = r.str(buf.size());
  if (fnv1a64(c.model_config) != config_hash) throw CheckpointError("checkpoint config hash mismatch");
  c.train_state = r.str(buf.size());
  const auto count = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = r.str(4096);
    Shape s;
    s.n = r.pod<std::int32_t>();
    s.c = r.pod<std::int32_t>();
    s.h = r.pod<std::int32_t>();
    s.w = r.pod<std::int32_t>();
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0 || s.numel() * sizeof(Real) > buf.size()) {
      throw CheckpointError("checkpoint tensor '" + name + "' has invalid shape");
    }
    std::vector<Real> data(s.numel());
    r.bytes(data.data(), data.size() * sizeof(Real));
    c.tensors.emplace_back(std::move(name), Tensor(s, std::move(data)));
  }
  if (!r.done()) throw CheckpointError("checkpoint has trailing bytes");
  return c;
}

void restore_parameters(Model& model, const Checkpoint& checkpoint) {
  if (fnv1a64(checkpoint.model_config) != model.config().hash()) {
    throw CheckpointError("checkpoint was written for a different model configuration");
  }
  for (const auto& e : model.params().entries()) {
    const Tensor* t = checkpoint.find(e.name);
    if (t == nullptr) throw CheckpointError("checkpoint is missing parameter " + e.name);
    if (!(t->shape() == e.var.value().shape())) {
      throw CheckpointError("checkpoint parameter " + e.name + " has shape " + t->shape().str() +
                            ", model expects " + e.var.value().shape().str());
    }
  }
  for (const auto& e : model.params().entries()) {
    Var v = e.var;
    v.mutable_value() = *checkpoint.find(e.name);
  }
}

Model load_model(const std::filesystem::path& path) {
  const Checkpoint c = read_checkpoint(path);
  Model model(ModelConfig::from_text(c.model_config));
  restore_parameters(model, c);
  return model;
}

}  // namespace smdris
