#include "smdris/trainer.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "smdris/rng.hpp"

namespace smdris {

namespace {

std::string format_real(Real v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general);
  return std::string(buf, res.ptr);
}

std::string b(bool v) { return v ? "true" : "false"; }

constexpr const char* kStatePrefix = "state.";

// Keys that may change between a run and its continuation.
bool bookkeeping_key(const std::string& key) {
  return key == "iterations" || key == "data_root" || key == "checkpoint_dir" || key == "eval_every";
}

TrainConfig parse_train(const std::map<std::string, std::string>& values) {
  KvReader r(values);
  TrainConfig c;
  c.profile = r.get_string("profile", c.profile);
  c.model = ModelConfig::from_reader(r);
  c.lr = r.get_double("lr", c.lr);
  c.beta1 = r.get_double("beta1", c.beta1);
  c.beta2 = r.get_double("beta2", c.beta2);
  c.adam_eps = r.get_double("adam_eps", c.adam_eps);
  c.batch_size = r.get_int("batch_size", c.batch_size);
  c.crop = r.get_int("crop", c.crop);
  c.iterations = r.get_int("iterations", c.iterations);
  c.seed = r.get_u64("seed", c.seed);
  c.loss.l1 = r.get_bool("enable_l1", c.loss.l1);
  c.loss.perceptual = r.get_bool("enable_pre", c.loss.perceptual);
  c.loss.mse = r.get_bool("enable_mse", c.loss.mse);
  c.extractor = r.get_string("extractor", c.extractor);
  c.data_root = r.get_string("data_root", "");
  c.checkpoint_dir = r.get_string("checkpoint_dir", "");
  c.eval_every = r.get_int("eval_every", c.eval_every);
  r.reject_unknown("train config");
  c.validate();
  return c;
}

std::map<std::string, std::string> to_map(const KvPairs& pairs) { return {pairs.begin(), pairs.end()}; }

}  // namespace

// ---------------------------------------------------------------------------
// TrainConfig

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.profile = "desk";
  c.model.base_channels = 8;
  c.batch_size = 4;
  c.crop = 64;
  c.iterations = 500;
  c.lr = 2e-4;
  return c;
}

TrainConfig TrainConfig::paper() {
  TrainConfig c;
  c.profile = "paper";
  c.model.base_channels = 16;
  c.batch_size = 44;
  c.crop = 256;
  c.iterations = 20000;
  c.lr = 2e-4;
  return c;
}

TrainConfig TrainConfig::for_profile(const std::string& name) {
  if (name == "desk") return desk();
  if (name == "paper") return paper();
  throw std::invalid_argument("unknown profile '" + name + "' (expected desk or paper)");
}

void TrainConfig::validate() const {
  model.validate();
  if (!(lr > 0.0)) throw std::invalid_argument("train config: lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("train config: Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw std::invalid_argument("train config: adam_eps must be positive");
  if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be positive");
  if (crop < 8 || crop % 8 != 0) throw std::invalid_argument("train config: crop must be a positive multiple of 8");
  if (loss.perceptual && (crop >> (model.stages - 1)) < 4) {
    throw std::invalid_argument("train config: crop " + std::to_string(crop) + " leaves the coarsest stage below the " +
                                "perceptual extractor's 4-pixel minimum");
  }
  if (iterations < 0) throw std::invalid_argument("train config: iterations must be non-negative");
  if (eval_every < 0) throw std::invalid_argument("train config: eval_every must be non-negative");
  if (extractor != "random" && extractor != "vgg16") {
    throw std::invalid_argument("train config: extractor must be random or vgg16");
  }
  if (!loss.l1 && !loss.perceptual && !loss.mse) {
    throw std::invalid_argument("train config: at least one loss term must be enabled");
  }
}

KvPairs TrainConfig::to_pairs() const {
  KvPairs p{{"profile", profile}};
  for (auto& kv : model.to_pairs()) p.push_back(std::move(kv));
  const KvPairs rest{
      {"lr", format_real(lr)},
      {"beta1", format_real(beta1)},
      {"beta2", format_real(beta2)},
      {"adam_eps", format_real(adam_eps)},
      {"batch_size", std::to_string(batch_size)},
      {"crop", std::to_string(crop)},
      {"iterations", std::to_string(iterations)},
      {"seed", std::to_string(seed)},
      {"enable_l1", b(loss.l1)},
      {"enable_pre", b(loss.perceptual)},
      {"enable_mse", b(loss.mse)},
      {"extractor", extractor},
      {"data_root", data_root.string()},
      {"checkpoint_dir", checkpoint_dir.string()},
      {"eval_every", std::to_string(eval_every)},
  };
  p.insert(p.end(), rest.begin(), rest.end());
  return p;
}

void TrainConfig::apply(const std::map<std::string, std::string>& overrides) {
  auto values = to_map(to_pairs());
  // A derived plan follows base_channels instead of pinning the old widths.
  if (model.channel_plan.empty() && overrides.count("channel_plan") == 0) values.erase("channel_plan");
  for (const auto& [k, v] : overrides) {
    if (k == "channel_plan") {
      values[k] = v;
      continue;
    }
    if (values.count(k) == 0) throw std::invalid_argument("train config: unknown key '" + k + "'");
    values[k] = v;
  }
  *this = parse_train(values);
}

TrainConfig TrainConfig::from_text(const std::string& text) {
  const auto values = parse_kv_text(text);
  const auto it = values.find("profile");
  TrainConfig c = for_profile(it == values.end() ? "desk" : it->second);
  c.apply(values);
  return c;
}

std::string config_diff(const TrainConfig& a, const TrainConfig& b, bool resumable_only) {
  const auto ma = to_map(a.to_pairs());
  const auto mb = to_map(b.to_pairs());
  std::string out;
  for (const auto& [k, va] : ma) {
    if (resumable_only && bookkeeping_key(k)) continue;
    const std::string& vb = mb.at(k);
    if (va != vb) out += k + ": " + va + " -> " + vb + "\n";
  }
  return out;
}

std::string TrainLogRecord::to_json() const {
  nlohmann::json j;
  j["iteration"] = iteration;
  j["stages"] = nlohmann::json::array();
  for (const StageLoss& s : loss.per_stage) {
    j["stages"].push_back({{"l1", s.l1}, {"perceptual", s.perceptual}, {"mse", s.mse}, {"combined", s.combined}});
  }
  j["total"] = loss.total;
  j["seconds"] = seconds;
  return j.dump();
}

// ---------------------------------------------------------------------------
// Data

PairedImages load_paired(const fs::path& root) {
  const ScanResult scan = scan_paired(root);
  PairedImages out;
  for (const PairedSample& s : scan.pairs) {
    Tensor raw = load_image(s.raw_path);
    Tensor ref = load_image(s.reference_path);
    if (!(raw.shape() == ref.shape())) {
      throw std::runtime_error("pair '" + s.id + "': raw " + raw.shape().str() + " and reference " +
                               ref.shape().str() + " differ in size");
    }
    out.ids.push_back(s.id);
    out.raw.push_back(std::move(raw));
    out.reference.push_back(std::move(ref));
  }
  return out;
}

std::pair<Tensor, Tensor> sample_batch(const TrainConfig& cfg, const PairedImages& data, int iteration) {
  const std::size_t N = data.raw.size();
  if (N == 0) throw std::invalid_argument("training set is empty");
  std::vector<Tensor> raws, refs;
  std::int64_t cached_epoch = -1;
  std::vector<std::size_t> order(N);
  for (int b = 0; b < cfg.batch_size; ++b) {
    const std::int64_t k = static_cast<std::int64_t>(iteration) * cfg.batch_size + b;
    const std::int64_t epoch = k / static_cast<std::int64_t>(N);
    if (epoch != cached_epoch) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      Rng shuffle(derive_seed(derive_seed(cfg.seed, "epoch"), static_cast<std::uint64_t>(epoch)));
      for (std::size_t i = N - 1; i > 0; --i) {
        std::swap(order[i], order[static_cast<std::size_t>(shuffle.uniform_int(0, static_cast<int>(i)))]);
      }
      cached_epoch = epoch;
    }
    const std::size_t idx = order[static_cast<std::size_t>(k % static_cast<std::int64_t>(N))];
    Rng crop_rng(derive_seed(derive_seed(cfg.seed, "crop"), static_cast<std::uint64_t>(k)));
    auto [raw, ref] = random_paired_crop(data.raw[idx], data.reference[idx], cfg.crop, crop_rng);
    raws.push_back(std::move(raw));
    refs.push_back(std::move(ref));
  }
  return {stack_batch(raws), stack_batch(refs)};
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

struct AdamState {
  long step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  explicit AdamState(const ParamStore& store) {
    for (const auto& e : store.entries()) {
      m.emplace_back(e.var.value().shape());
      v.emplace_back(e.var.value().shape());
    }
  }
};

void adam_step(const TrainConfig& cfg, ParamStore& store, AdamState& st) {
  ++st.step;
  const Real c1 = 1.0 - std::pow(cfg.beta1, static_cast<Real>(st.step));
  const Real c2 = 1.0 - std::pow(cfg.beta2, static_cast<Real>(st.step));
  const auto& entries = store.entries();
  for (std::size_t p = 0; p < entries.size(); ++p) {
    const Var& var = entries[p].var;
    const Tensor& g = var.grad();
    if (g.empty()) continue;
    Tensor& w = var.mutable_value();
    Tensor& m = st.m[p];
    Tensor& v = st.v[p];
    for (std::size_t i = 0; i < w.numel(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      w[i] -= cfg.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.adam_eps);
    }
  }
}

void write_checkpoint(const fs::path& path, const TrainConfig& cfg, const Model& model, const AdamState& st,
                      int iteration) {
  Checkpoint c = make_checkpoint(model);
  c.train_state = cfg.to_text() + std::string(kStatePrefix) + "iteration = " + std::to_string(iteration) + "\n" +
                  kStatePrefix + "adam_step = " + std::to_string(st.step) + "\n";
  const auto& entries = model.params().entries();
  for (std::size_t p = 0; p < entries.size(); ++p) {
    c.tensors.emplace_back("adam.m/" + entries[p].name, st.m[p]);
    c.tensors.emplace_back("adam.v/" + entries[p].name, st.v[p]);
  }
  save_checkpoint(path, c);
}

struct StoredState {
  TrainConfig config;
  int iteration = 0;
  long adam_step = 0;
};

StoredState parse_state(const Checkpoint& c) {
  auto values = parse_kv_text(c.train_state);
  StoredState s;
  std::map<std::string, std::string> cfg_values;
  for (const auto& [k, v] : values) {
    if (k.rfind(kStatePrefix, 0) == 0) continue;
    cfg_values.emplace(k, v);
  }
  if (values.count("state.iteration") == 0 || values.count("state.adam_step") == 0) {
    throw CheckpointError("checkpoint carries no training state");
  }
  s.config = TrainConfig::from_text(format_kv(KvPairs(cfg_values.begin(), cfg_values.end())));
  s.iteration = std::stoi(values.at("state.iteration"));
  s.adam_step = std::stol(values.at("state.adam_step"));
  return s;
}

bool all_finite(const LossReport& r) {
  if (!std::isfinite(r.total)) return false;
  for (const StageLoss& s : r.per_stage) {
    if (!std::isfinite(s.l1) || !std::isfinite(s.perceptual) || !std::isfinite(s.mse)) return false;
  }
  return true;
}

void run_loop(const TrainConfig& cfg, const PairedImages& data, Model& model, AdamState& st, int start,
              std::vector<TrainLogRecord>& log, const TrainObserver& observer, bool append_log) {
  const auto ext = make_extractor(cfg.extractor, derive_seed(cfg.seed, "extractor"));
  std::ofstream log_file;
  if (!cfg.checkpoint_dir.empty()) {
    fs::create_directories(cfg.checkpoint_dir);
    log_file.open(cfg.checkpoint_dir / "train_log.jsonl", append_log ? std::ios::app : std::ios::trunc);
    if (!log_file) throw std::runtime_error("cannot open training log in " + cfg.checkpoint_dir.string());
  }
  for (int it = start; it < cfg.iterations; ++it) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto [raw, ref] = sample_batch(cfg, data, it);
    const ScalePyramid inputs = build_input_pyramid(raw);
    const ScalePyramid targets = build_target_pyramid(ref);
    const std::vector<Var> outputs = model.forward_train(inputs);
    TotalLoss loss = total_loss(outputs, targets, *ext, cfg.loss);

    TrainLogRecord rec;
    rec.iteration = it + 1;
    rec.loss = loss.report;
    if (!all_finite(rec.loss)) {
      if (log_file) log_file << rec.to_json().substr(0, rec.to_json().size() - 1) << ",\"aborted\":\"non-finite loss\"}\n";
      throw TrainingAborted("non-finite loss at iteration " + std::to_string(it + 1) + "; training aborted");
    }
    model.params().zero_grad();
    loss.total.backward();
    adam_step(cfg, model.params(), st);
    rec.seconds = std::chrono::duration<Real>(std::chrono::steady_clock::now() - t0).count();

    if (log_file) {
      log_file << rec.to_json() << '\n';
      log_file.flush();
    }
    log.push_back(rec);
    if (observer) observer(rec);
    if (!cfg.checkpoint_dir.empty() && cfg.eval_every > 0 && (it + 1) % cfg.eval_every == 0) {
      write_checkpoint(cfg.checkpoint_dir / "latest.ckpt", cfg, model, st, it + 1);
    }
  }
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const PairedImages& data, const TrainObserver& observer) {
  cfg.validate();
  if (data.raw.empty()) throw std::invalid_argument("training set is empty");
  Model model(cfg.model);
  AdamState st(model.params());
  std::vector<TrainLogRecord> log;
  run_loop(cfg, data, model, st, 0, log, observer, false);
  fs::path final_path;
  if (!cfg.checkpoint_dir.empty()) {
    final_path = cfg.checkpoint_dir / "final.ckpt";
    write_checkpoint(final_path, cfg, model, st, cfg.iterations);
  }
  return {std::move(model), std::move(log), final_path};
}

TrainResult train(const TrainConfig& cfg, const TrainObserver& observer) {
  if (cfg.data_root.empty()) throw std::invalid_argument("train: no dataset root configured");
  return train(cfg, load_paired(cfg.data_root), observer);
}

TrainConfig stored_config(const Checkpoint& checkpoint) { return parse_state(checkpoint).config; }

TrainResult resume(const fs::path& checkpoint, const TrainConfig& cfg, const PairedImages& data,
                   const TrainObserver& observer) {
  cfg.validate();
  const Checkpoint c = read_checkpoint(checkpoint);
  const StoredState stored = parse_state(c);
  const std::string diff = config_diff(stored.config, cfg, true);
  if (!diff.empty()) throw CheckpointError("configuration does not match the checkpoint:\n" + diff);

  Model model(cfg.model);
  AdamState st(model.params());
  const auto& entries = model.params().entries();
  for (std::size_t p = 0; p < entries.size(); ++p) {
    for (auto [prefix, dst] : {std::pair{"adam.m/", &st.m[p]}, std::pair{"adam.v/", &st.v[p]}}) {
      const Tensor* t = c.find(prefix + entries[p].name);
      if (t == nullptr || !(t->shape() == dst->shape())) {
        throw CheckpointError("checkpoint optimizer state for " + entries[p].name + " is missing or malformed");
      }
      *dst = *t;
    }
  }
  restore_parameters(model, c);
  st.step = stored.adam_step;

  std::vector<TrainLogRecord> log;
  run_loop(cfg, data, model, st, stored.iteration, log, observer, true);
  fs::path final_path;
  if (!cfg.checkpoint_dir.empty()) {
    final_path = cfg.checkpoint_dir / "final.ckpt";
    write_checkpoint(final_path, cfg, model, st, std::max(cfg.iterations, stored.iteration));
  }
  return {std::move(model), std::move(log), final_path};
}

TrainResult resume(const fs::path& checkpoint, const TrainConfig& cfg, const TrainObserver& observer) {
  if (cfg.data_root.empty()) throw std::invalid_argument("resume: no dataset root configured");
  return resume(checkpoint, cfg, load_paired(cfg.data_root), observer);
}

// ---------------------------------------------------------------------------
// Evaluation

EvalTable evaluate(const Model& model, const fs::path& dataset_root, const EvalOptions& options,
                   std::vector<std::string>* warnings) {
  struct Item {
    std::string id;
    fs::path raw;
    fs::path reference;
  };
  std::vector<Item> items;
  if (options.paired) {
    const ScanResult scan = scan_paired(dataset_root);
    for (const PairedSample& s : scan.pairs) items.push_back({s.id, s.raw_path, s.reference_path});
    if (warnings) {
      for (const fs::path& p : scan.unmatched) warnings->push_back("unmatched file skipped: " + p.string());
    }
  } else {
    const fs::path dir = fs::is_directory(dataset_root / "raw") ? dataset_root / "raw" : dataset_root;
    for (const fs::path& p : list_images(dir)) items.push_back({p.stem().string(), p, {}});
  }
  if (items.empty()) throw std::runtime_error("no images found under " + dataset_root.string());

  EvalTable table;
  for (const Item& item : items) {
    try {
      const Tensor raw = load_image(item.raw);
      Tensor ref;
      if (options.paired) ref = load_image(item.reference);
      const auto t0 = std::chrono::steady_clock::now();
      const Tensor restored = model.infer_full(raw);
      const Real seconds = std::chrono::duration<Real>(std::chrono::steady_clock::now() - t0).count();
      EvalRow row;
      row.id = item.id;
      row.seconds = seconds;
      row.metrics = evaluate_image(restored, options.paired ? &ref : nullptr, options);
      table.rows.push_back(std::move(row));
    } catch (const std::exception& e) {
      ++table.skipped;
      if (warnings) warnings->push_back("skipped " + item.id + ": " + e.what());
    }
  }
  if (table.rows.empty()) throw std::runtime_error("every image under " + dataset_root.string() + " failed to evaluate");
  return table;
}

// ---------------------------------------------------------------------------
// Ablations

AblationMatrix parse_ablation_matrix(const std::string& name) {
  if (name == "stages") return AblationMatrix::stages;
  if (name == "bica") return AblationMatrix::bica;
  if (name == "asisf") return AblationMatrix::asisf;
  if (name == "loss") return AblationMatrix::loss;
  throw std::invalid_argument("unknown ablation matrix '" + name + "' (expected stages, bica, asisf or loss)");
}

const char* ablation_matrix_name(AblationMatrix m) {
  switch (m) {
    case AblationMatrix::stages: return "stages";
    case AblationMatrix::bica: return "bica";
    case AblationMatrix::asisf: return "asisf";
    case AblationMatrix::loss: return "loss";
  }
  return "?";
}

std::vector<AblationRow> ablation_rows(const TrainConfig& base, AblationMatrix matrix) {
  std::vector<AblationRow> rows;
  auto add = [&](std::string label, const std::function<void(TrainConfig&)>& edit) {
    AblationRow r;
    r.label = std::move(label);
    r.config = base;
    edit(r.config);
    rows.push_back(std::move(r));
  };
  auto flags = [](std::initializer_list<std::pair<const char*, bool>> f) {
    std::string s;
    for (const auto& [n, on] : f) s += (s.empty() ? "" : " ") + std::string(n) + "=" + (on ? "1" : "0");
    return s;
  };
  switch (matrix) {
    case AblationMatrix::stages:
      for (int s = 1; s <= kPyramidLevels; ++s) {
        add(flags({{"S1", true}, {"S2", s >= 2}, {"S3", s >= 3}, {"S4", s >= 4}}), [s](TrainConfig& c) { c.model.stages = s; });
      }
      break;
    case AblationMatrix::bica:
      for (int off = 0; off <= 4; ++off) {
        add(flags({{"CA", off != 0}, {"PA", off != 1}, {"ReGIA", off != 2}, {"HCAFE", off != 3}}), [off](TrainConfig& c) {
          c.model.enable_cfa_ca = off != 0;
          c.model.enable_cfa_pa = off != 1;
          c.model.enable_regia = off != 2;
          c.model.enable_hcafe = off != 3;
        });
      }
      break;
    case AblationMatrix::asisf:
      for (int off = 0; off <= 3; ++off) {
        add(flags({{"En", off != 0}, {"En_to_De", off != 1}, {"De", off != 2}}), [off](TrainConfig& c) {
          c.model.enable_asisf_en = off != 0;
          c.model.enable_asisf_en_to_de = off != 1;
          c.model.enable_asisf_de = off != 2;
        });
      }
      break;
    case AblationMatrix::loss:
      for (int off = 0; off <= 3; ++off) {
        add(flags({{"L1", off != 0}, {"Lpre", off != 1}, {"Lmse", off != 2}}), [off](TrainConfig& c) {
          c.loss.l1 = off != 0;
          c.loss.perceptual = off != 1;
          c.loss.mse = off != 2;
        });
      }
      break;
  }
  return rows;
}

AblationTable run_ablation_matrix(const TrainConfig& base, AblationMatrix matrix, const PairedImages& train_set,
                                  const PairedImages& val_set, const std::function<void(const AblationRow&)>& on_row) {
  if (val_set.raw.empty()) throw std::invalid_argument("ablation: held-out split is empty");
  AblationTable table;
  table.matrix = matrix;
  for (AblationRow& row : ablation_rows(base, matrix)) {
    try {
      row.config.checkpoint_dir.clear();
      const TrainResult result = train(row.config, train_set);
      row.parameters = result.model.params().total_count();
      row.final_loss = result.log.empty() ? 0.0 : result.log.back().loss.total;
      Real p = 0.0, s = 0.0;
      for (std::size_t i = 0; i < val_set.raw.size(); ++i) {
        const Tensor restored = result.model.infer_full(val_set.raw[i]);
        p += psnr(restored, val_set.reference[i]);
        s += ssim(restored, val_set.reference[i]);
      }
      row.psnr = p / static_cast<Real>(val_set.raw.size());
      row.ssim = s / static_cast<Real>(val_set.raw.size());
      row.all = row.psnr + row.ssim;
    } catch (const std::exception& e) {
      throw std::runtime_error(std::string("ablation ") + ablation_matrix_name(matrix) + " row [" + row.label +
                               "] failed: " + e.what());
    }
    if (on_row) on_row(row);
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string AblationTable::to_text() const {
  std::ostringstream os;
  os << "matrix " << ablation_matrix_name(matrix) << '\n';
  os << std::left << std::setw(36) << "row" << std::right << std::setw(10) << "PSNR" << std::setw(8) << "SSIM"
     << std::setw(10) << "ALL" << std::setw(11) << "params" << std::setw(12) << "final_loss" << '\n';
  os << std::fixed;
  for (const AblationRow& r : rows) {
    os << std::left << std::setw(36) << r.label << std::right << std::setprecision(3) << std::setw(10) << r.psnr
       << std::setw(8) << r.ssim << std::setw(10) << r.all << std::setw(11) << r.parameters << std::setprecision(5)
       << std::setw(12) << r.final_loss << '\n';
  }
  return os.str();
}

void AblationTable::write_csv(const fs::path& path) const {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "matrix,row,PSNR,SSIM,ALL,params,final_loss\n" << std::setprecision(10);
  for (const AblationRow& r : rows) {
    os << ablation_matrix_name(matrix) << ",\"" << r.label << "\"," << r.psnr << ',' << r.ssim << ',' << r.all << ','
       << r.parameters << ',' << r.final_loss << '\n';
  }
}

}  // namespace smdris
