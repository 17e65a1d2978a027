#include "deitfake/train.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "deitfake/errors.hpp"
#include "parallel.hpp"

namespace deitfake {

// ---------------------------------------------------------------------------
// Loss

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels) {
  if (logits.rank() != 2) throw DimensionError("cross_entropy: logits must be [B, C], got " + shape_str(logits.shape()));
  const std::size_t b = logits.dim(0);
  const std::size_t c = logits.dim(1);
  if (labels.size() != b) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " + std::to_string(b));
  }
  for (auto y : labels) {
    if (y >= c) throw ContractError("cross_entropy: label " + std::to_string(y) + " out of range for " + std::to_string(c) + " classes");
  }
  auto z = logits.data();
  std::vector<double> probs(b * c);
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const float* row = z.data() + i * c;
    const double mx = *std::max_element(row, row + c);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(row[j] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] = std::exp(row[j] - lse);
    total += lse - row[labels[i]];
  }
  const bool track = should_record({&logits});
  Tensor out = Tensor::scalar(static_cast<float>(total / static_cast<double>(b)));
  check_finite(out, "cross_entropy");
  if (track) {
    out.set_requires_grad(true);
    std::vector<std::size_t> ys(labels.begin(), labels.end());
    GradTape::active()->record("cross_entropy", [logits, out, probs = std::move(probs), ys = std::move(ys), b, c]() {
      if (!out.has_grad()) return;
      const double g = out.grad()[0] / static_cast<double>(b);
      auto lg = logits.ensure_grad();
      for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
          const double onehot = j == ys[i] ? 1.0 : 0.0;
          lg[i * c + j] += static_cast<float>(g * (probs[i * c + j] - onehot));
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Configuration

std::string_view pipeline_kind_name(PipelineKind kind) {
  return kind == PipelineKind::Stage1 ? "stage1" : "stage2";
}

Pipeline build_pipeline(PipelineKind kind, const AugmentSpec& spec) {
  return kind == PipelineKind::Stage1 ? build_stage1_pipeline(spec) : build_stage2_pipeline(spec);
}

void StageConfig::validate() const {
  if (epochs < 1) throw ContractError("stage epochs must be at least 1");
  if (batch_size < 1) throw ContractError("stage batch_size must be at least 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ContractError("learning_rate must be > 0");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) throw ContractError("weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ContractError("betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw ContractError("eps must be > 0");
  if (!(max_grad_norm >= 0.0) || !std::isfinite(max_grad_norm)) throw ContractError("max_grad_norm must be >= 0");
  if (freeze.block_begin > freeze.block_end) throw ContractError("freeze block range is reversed");
}

std::uint64_t StageConfig::fingerprint() const {
  std::uint64_t h = 0x53544147ULL;
  auto mixd = [&](double d) { h = hash_combine(h, std::bit_cast<std::uint64_t>(d)); };
  auto mixu = [&](std::uint64_t u) { h = hash_combine(h, u); };
  mixu(epochs);
  mixu(batch_size);
  mixd(learning_rate);
  mixd(weight_decay);
  mixd(beta1);
  mixd(beta2);
  mixd(eps);
  mixd(max_grad_norm);
  mixu(static_cast<std::uint64_t>(pipeline));
  mixu(freeze.block_begin);
  mixu(freeze.block_end);
  mixu(freeze.freeze_embeddings ? 1 : 0);
  mixu(early_stopping.patience);
  mixu(seed);
  return h;
}

// ---------------------------------------------------------------------------
// Optimizer

OptimizerState OptimizerState::for_model(const DeitModel& model) {
  OptimizerState s;
  for (const auto& p : model.parameters()) {
    s.m.emplace_back(p.tensor.numel(), 0.0f);
    s.v.emplace_back(p.tensor.numel(), 0.0f);
  }
  return s;
}

void adamw_update(std::span<float> theta, std::span<const float> grad, std::span<float> m, std::span<float> v,
                  std::uint64_t t, const AdamWHyper& hp, double grad_scale) {
  if (t == 0) throw ContractError("adamw_update: step must be >= 1");
  if (m.size() != theta.size() || v.size() != theta.size() || (!grad.empty() && grad.size() != theta.size())) {
    throw DimensionError("adamw_update: buffer sizes differ");
  }
  const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double g = grad.empty() ? 0.0 : grad_scale * grad[i];
    const double mi = hp.beta1 * m[i] + (1.0 - hp.beta1) * g;
    const double vi = hp.beta2 * v[i] + (1.0 - hp.beta2) * g * g;
    m[i] = static_cast<float>(mi);
    v[i] = static_cast<float>(vi);
    const double th = theta[i];
    const double step = (mi / bc1) / (std::sqrt(vi / bc2) + hp.eps) + hp.weight_decay * th;
    theta[i] = static_cast<float>(th - hp.learning_rate * step);
  }
}

double global_grad_norm(const std::vector<NamedParameter>& params) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (!p.trainable() || !p.tensor.has_grad()) continue;
    for (float g : p.tensor.grad()) sq += static_cast<double>(g) * g;
  }
  return std::sqrt(sq);
}

void adamw_step(const std::vector<NamedParameter>& params, OptimizerState& state, const AdamWHyper& hyper) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ContractError("adamw_step: optimizer state holds " + std::to_string(state.m.size()) + " buffers for " +
                        std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (state.m[i].size() != p.tensor.numel() || state.v[i].size() != p.tensor.numel()) {
      throw DimensionError("adamw_step: moment buffers do not match parameter " + p.name);
    }
    if (!p.trainable() || !p.tensor.has_grad()) continue;
    for (float g : p.tensor.grad()) {
      if (!std::isfinite(g)) throw NumericError("adamw_step: non-finite gradient in parameter " + p.name);
    }
  }
  double scale = 1.0;
  if (hyper.max_grad_norm > 0.0) {
    const double norm = global_grad_norm(params);
    if (norm > hyper.max_grad_norm) scale = hyper.max_grad_norm / norm;
  }
  ++state.t;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (!p.trainable()) continue;
    Tensor handle = p.tensor;
    std::span<const float> g = handle.has_grad() ? std::span<const float>(handle.grad()) : std::span<const float>{};
    adamw_update(handle.data(), g, state.m[i], state.v[i], state.t, hyper, scale);
  }
}

void adamw_step(const DeitModel& model, OptimizerState& state, const StageConfig& cfg) {
  adamw_step(model.parameters(), state,
             AdamWHyper{cfg.learning_rate, cfg.weight_decay, cfg.beta1, cfg.beta2, cfg.eps, cfg.max_grad_norm});
}

// ---------------------------------------------------------------------------
// Data

TrainSet load_train_set(const SampleManifest& manifest, ImageSource& source) {
  TrainSet set;
  set.images.reserve(manifest.size());
  for (const auto& r : manifest.records) {
    set.images.push_back(source.load(manifest, r));
    set.labels.push_back(r.label);
  }
  return set;
}

EvalSet materialize(const SampleManifest& manifest, ImageSource& source, const Pipeline& pipeline,
                    std::uint64_t seed, std::size_t threads) {
  std::vector<const ImageBuffer*> images;
  images.reserve(manifest.size());
  for (const auto& r : manifest.records) images.push_back(&source.load(manifest, r));
  EvalSet set;
  set.inputs.resize(manifest.size());
  set.labels = manifest.labels();
  detail::parallel_for(manifest.size(), threads, [&](std::size_t i) {
    RngStream rng = RngStream::for_sample(seed, 0, i);
    set.inputs[i] = pipeline.apply(*images[i], rng);
  });
  return set;
}

namespace {

Tensor stack(const std::vector<Tensor>& items) {
  Shape shape = items.front().shape();
  shape.insert(shape.begin(), items.size());
  std::vector<float> data;
  data.reserve(shape_numel(shape));
  for (const auto& t : items) {
    if (t.shape() != items.front().shape()) throw DimensionError("stack: inconsistent sample shapes");
    data.insert(data.end(), t.data().begin(), t.data().end());
  }
  return Tensor(std::move(shape), std::move(data));
}

std::uint64_t stage_seed(std::uint64_t seed, std::uint32_t stage) { return hash_combine(seed, 0x5354470000ULL + stage); }

std::size_t argmax_row(std::span<const float> row) {
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

}  // namespace

EpochStats train_epoch(DeitModel& model, const TrainSet& data, const Pipeline& pipeline, OptimizerState& optimizer,
                       const StageConfig& cfg, std::uint32_t stage, std::size_t epoch, std::size_t threads) {
  if (data.size() == 0) throw ContractError("train_epoch: empty training set");
  const std::uint64_t seed = stage_seed(cfg.seed, stage);
  const std::size_t classes = model.config().num_classes;
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (const auto& batch : epoch_batches(data.size(), cfg.batch_size, true, seed, epoch)) {
    std::vector<Tensor> inputs(batch.size());
    detail::parallel_for(batch.size(), threads, [&](std::size_t k) {
      RngStream rng = RngStream::for_sample(seed, epoch, batch[k]);
      inputs[k] = pipeline.apply(data.images[batch[k]], rng);
    });
    std::vector<std::size_t> ys;
    ys.reserve(batch.size());
    for (auto i : batch) ys.push_back(label_index(data.labels[i]));

    GradTape tape;
    Tensor logits;
    Tensor loss;
    {
      GradTape::Recording rec(tape);
      logits = forward(model, stack(inputs));
      loss = cross_entropy(logits, ys);
    }
    backward(loss, tape);
    adamw_step(model, optimizer, cfg);
    model.zero_grad();

    loss_sum += static_cast<double>(loss.item()) * static_cast<double>(batch.size());
    for (std::size_t k = 0; k < batch.size(); ++k) {
      if (argmax_row(logits.data().subspan(k * classes, classes)) == ys[k]) ++correct;
    }
  }
  const auto n = static_cast<double>(data.size());
  return {loss_sum / n, static_cast<double>(correct) / n};
}

std::vector<double> predict_scores(const DeitModel& model, const EvalSet& data, std::size_t batch_size,
                                   double* mean_loss) {
  if (batch_size == 0) throw ContractError("predict_scores: batch_size must be at least 1");
  const std::size_t classes = model.config().num_classes;
  std::vector<double> scores;
  scores.reserve(data.size());
  double loss = 0.0;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t end = std::min(data.size(), start + batch_size);
    std::vector<Tensor> items(data.inputs.begin() + static_cast<long>(start), data.inputs.begin() + static_cast<long>(end));
    const Tensor logits = forward(model, stack(items));
    auto z = logits.data();
    for (std::size_t k = 0; k < end - start; ++k) {
      const float* row = z.data() + k * classes;
      const double mx = *std::max_element(row, row + classes);
      double s = 0.0;
      for (std::size_t j = 0; j < classes; ++j) s += std::exp(row[j] - mx);
      const double lse = mx + std::log(s);
      scores.push_back(std::exp(row[label_index(Label::Fake)] - lse));
      loss += lse - row[label_index(data.labels[start + k])];
    }
  }
  if (mean_loss) *mean_loss = data.size() == 0 ? 0.0 : loss / static_cast<double>(data.size());
  return scores;
}

MetricsReport evaluate(const DeitModel& model, const EvalSet& data, std::size_t batch_size) {
  if (data.size() == 0) throw ContractError("evaluate: empty evaluation set");
  double loss = 0.0;
  const auto scores = predict_scores(model, data, batch_size, &loss);
  return make_report(scores, data.labels, loss);
}

MetricsReport evaluate(const DeitModel& model, const SampleManifest& manifest, ImageSource& source,
                       const Pipeline& eval_pipeline) {
  if (manifest.empty()) throw ContractError("evaluate: empty manifest");
  if (eval_pipeline.is_random()) throw ContractError("evaluate: evaluation pipeline must be deterministic");
  return evaluate(model, materialize(manifest, source, eval_pipeline));
}

// ---------------------------------------------------------------------------
// Epoch logs

std::string epoch_log_json(const EpochLog& log) {
  nlohmann::ordered_json j;
  j["stage"] = log.stage;
  j["epoch"] = log.epoch;
  j["train_loss"] = log.train_loss;
  j["train_accuracy"] = log.train_accuracy;
  j["val_loss"] = log.val_loss;
  j["accuracy"] = log.accuracy;
  j["f1_macro"] = log.f1_macro;
  j["auroc"] = log.auroc;
  if (log.test_accuracy) j["test_accuracy"] = *log.test_accuracy;
  if (log.test_auroc) j["test_auroc"] = *log.test_auroc;
  return j.dump();
}

EpochLog parse_epoch_log(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    EpochLog log;
    log.stage = j.at("stage").get<std::uint32_t>();
    log.epoch = j.at("epoch").get<std::size_t>();
    log.train_loss = j.at("train_loss").get<double>();
    log.train_accuracy = j.at("train_accuracy").get<double>();
    log.val_loss = j.at("val_loss").get<double>();
    log.accuracy = j.at("accuracy").get<double>();
    log.f1_macro = j.at("f1_macro").get<double>();
    log.auroc = j.at("auroc").get<double>();
    if (j.contains("test_accuracy")) log.test_accuracy = j["test_accuracy"].get<double>();
    if (j.contains("test_auroc")) log.test_auroc = j["test_auroc"].get<double>();
    return log;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("epoch log: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Checkpoints

Checkpoint capture(const DeitModel& model) {
  Checkpoint c;
  c.config = model.config();
  for (const auto& p : model.parameters()) {
    c.parameters.push_back({p.name, p.tensor.shape(), p.trainable(), {p.tensor.data().begin(), p.tensor.data().end()}});
  }
  return c;
}

void load_parameters(DeitModel& model, const Checkpoint& checkpoint) {
  if (!(checkpoint.config == model.config())) throw CompatibilityError("checkpoint model config differs from the model");
  const auto params = model.parameters();
  if (params.size() != checkpoint.parameters.size()) {
    throw CompatibilityError("checkpoint holds " + std::to_string(checkpoint.parameters.size()) + " parameters, model has " +
                             std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& src = checkpoint.parameters[i];
    if (src.name != params[i].name || src.shape != params[i].tensor.shape() || src.data.size() != params[i].tensor.numel()) {
      throw CompatibilityError("checkpoint parameter " + src.name + " " + shape_str(src.shape) + " does not match " +
                               params[i].name + " " + shape_str(params[i].tensor.shape()));
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor handle = params[i].tensor;
    std::copy(checkpoint.parameters[i].data.begin(), checkpoint.parameters[i].data.end(), handle.data().begin());
    handle.set_requires_grad(checkpoint.parameters[i].trainable);
    handle.clear_grad();
  }
}

DeitModel restore_model(const Checkpoint& checkpoint) {
  try {
    checkpoint.config.validate();
  } catch (const ContractError& e) {
    throw CompatibilityError(std::string("checkpoint config invalid: ") + e.what());
  }
  DeitModel model(checkpoint.config, 0);
  load_parameters(model, checkpoint);
  return model;
}

namespace {

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}
  void u8(std::uint8_t v) { os_.put(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(std::string_view s) { os_.write(s.data(), static_cast<std::streamsize>(s.size())); }
  void floats(std::span<const float> xs) {
    std::string buf(xs.size() * 4, '\0');
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const auto bits = std::bit_cast<std::uint32_t>(xs[i]);
      for (int k = 0; k < 4; ++k) buf[4 * i + k] = static_cast<char>(bits >> (8 * k));
    }
    bytes(buf);
  }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}
  std::uint8_t u8() {
    const int c = is_.get();
    if (c == std::char_traits<char>::eof()) throw IoError("checkpoint truncated");
    return static_cast<std::uint8_t>(c);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string bytes(std::size_t n) {
    std::string s(n, '\0');
    is_.read(s.data(), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) throw IoError("checkpoint truncated");
    return s;
  }
  std::vector<float> floats(std::size_t n) {
    const std::string raw = bytes(n * 4);
    std::vector<float> out(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t bits = 0;
      for (int k = 0; k < 4; ++k) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(raw[4 * i + k])) << (8 * k);
      out[i] = std::bit_cast<float>(bits);
    }
    return out;
  }
  // Guards allocations against corrupt counts.
  std::uint64_t count(std::uint64_t limit, const char* what) {
    const auto n = u64();
    if (n > limit) throw CompatibilityError(std::string("checkpoint ") + what + " count " + std::to_string(n) + " is implausible");
    return n;
  }

 private:
  std::istream& is_;
};

constexpr std::uint64_t kMaxElements = 1ULL << 32;

}  // namespace

void write_checkpoint(std::ostream& os, const Checkpoint& c) {
  Writer w(os);
  w.bytes("DTFK");
  w.u32(kCheckpointVersion);
  const auto& m = c.config;
  for (auto v : {m.image_size, m.patch_size, m.hidden_dim, m.num_layers, m.num_heads, m.mlp_ratio, m.num_classes}) w.u64(v);
  w.u8(m.use_distillation_token ? 1 : 0);
  w.f32(m.layer_norm_eps);
  w.u32(c.stage);
  w.u64(c.epoch);
  w.u64(c.seed);
  w.u64(c.stage_fingerprint);
  w.f64(c.best_auroc);
  w.u64(c.best_epoch);
  w.u64(c.epochs_since_best);
  w.u64(c.parameters.size());
  for (const auto& p : c.parameters) {
    w.u32(static_cast<std::uint32_t>(p.name.size()));
    w.bytes(p.name);
    w.u8(p.trainable ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(p.shape.size()));
    for (auto d : p.shape) w.u64(d);
    w.floats(p.data);
  }
  w.u64(c.optimizer.t);
  w.u64(c.optimizer.m.size());
  for (std::size_t i = 0; i < c.optimizer.m.size(); ++i) {
    w.u64(c.optimizer.m[i].size());
    w.floats(c.optimizer.m[i]);
    w.floats(c.optimizer.v[i]);
  }
  w.u64(c.history.size());
  for (const auto& h : c.history) {
    w.u32(h.stage);
    w.u64(h.epoch);
    for (double v : {h.train_loss, h.train_accuracy, h.val_loss, h.accuracy, h.f1_macro, h.auroc}) w.f64(v);
    const bool has_test = h.test_accuracy.has_value() && h.test_auroc.has_value();
    w.u8(has_test ? 1 : 0);
    if (has_test) {
      w.f64(*h.test_accuracy);
      w.f64(*h.test_auroc);
    }
  }
  if (!os) throw IoError("checkpoint write failed");
}

Checkpoint read_checkpoint(std::istream& is) {
  Reader r(is);
  if (r.bytes(4) != "DTFK") throw CompatibilityError("not a checkpoint file (bad magic)");
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw CompatibilityError("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                             std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint c;
  auto& m = c.config;
  for (auto* f : {&m.image_size, &m.patch_size, &m.hidden_dim, &m.num_layers, &m.num_heads, &m.mlp_ratio, &m.num_classes}) {
    *f = static_cast<std::size_t>(r.u64());
  }
  m.use_distillation_token = r.u8() != 0;
  m.layer_norm_eps = r.f32();
  c.stage = r.u32();
  c.epoch = r.u64();
  c.seed = r.u64();
  c.stage_fingerprint = r.u64();
  c.best_auroc = r.f64();
  c.best_epoch = r.u64();
  c.epochs_since_best = r.u64();
  const auto np = r.count(1 << 16, "parameter");
  for (std::uint64_t i = 0; i < np; ++i) {
    ParameterArray p;
    const auto len = r.u32();
    if (len > 4096) throw CompatibilityError("checkpoint parameter name too long");
    p.name = r.bytes(len);
    p.trainable = r.u8() != 0;
    const auto rank = r.u32();
    if (rank > 8) throw CompatibilityError("checkpoint parameter rank " + std::to_string(rank) + " is implausible");
    std::uint64_t numel = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      p.shape.push_back(static_cast<std::size_t>(r.u64()));
      numel *= p.shape.back();
      if (numel > kMaxElements) throw CompatibilityError("checkpoint parameter " + p.name + " is implausibly large");
    }
    p.data = r.floats(numel);
    c.parameters.push_back(std::move(p));
  }
  c.optimizer.t = r.u64();
  const auto nm = r.count(1 << 16, "moment");
  for (std::uint64_t i = 0; i < nm; ++i) {
    const auto n = r.count(kMaxElements, "moment element");
    c.optimizer.m.push_back(r.floats(n));
    c.optimizer.v.push_back(r.floats(n));
  }
  const auto nh = r.count(1 << 20, "history");
  for (std::uint64_t i = 0; i < nh; ++i) {
    EpochLog h;
    h.stage = r.u32();
    h.epoch = r.u64();
    for (double* f : {&h.train_loss, &h.train_accuracy, &h.val_loss, &h.accuracy, &h.f1_macro, &h.auroc}) *f = r.f64();
    if (r.u8() != 0) {
      h.test_accuracy = r.f64();
      h.test_auroc = r.f64();
    }
    c.history.push_back(h);
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write checkpoint " + path.string());
  write_checkpoint(os, checkpoint);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  return read_checkpoint(is);
}

// ---------------------------------------------------------------------------
// Stages

StageResult run_stage(DeitModel& model, const StageData& data, const AugmentSpec& augment, const StageConfig& cfg,
                      std::uint32_t stage, const std::optional<StageResume>& resume, const StageHooks& hooks,
                      const RunOptions& options) {
  cfg.validate();
  if (data.validation.size() == 0) throw ContractError("run_stage: empty validation set");
  apply_freeze(model, cfg.freeze);
  const Pipeline pipeline = build_pipeline(cfg.pipeline, augment);

  StageResult result;
  OptimizerState optimizer = OptimizerState::for_model(model);
  double best_auroc = -1.0;
  std::size_t best_epoch = 0;
  std::size_t since_best = 0;
  std::size_t start = 0;

  if (resume) {
    for (const Checkpoint* ck : {&resume->last, &resume->best}) {
      if (!(ck->config == model.config())) throw CompatibilityError("resume checkpoint model config differs");
      if (ck->stage != stage) {
        throw CompatibilityError("resume checkpoint is from stage " + std::to_string(ck->stage) + ", not stage " +
                                 std::to_string(stage));
      }
      if (ck->stage_fingerprint != cfg.fingerprint() || ck->seed != cfg.seed) {
        throw CompatibilityError("resume checkpoint was written under a different stage configuration");
      }
    }
    const auto& last = resume->last;
    load_parameters(model, last);
    optimizer = last.optimizer;
    if (optimizer.m.size() != model.parameters().size()) throw CompatibilityError("resume checkpoint optimizer state is incomplete");
    result.logs = last.history;
    best_auroc = last.best_auroc;
    best_epoch = last.best_epoch;
    since_best = last.epochs_since_best;
    start = last.epoch;
    result.last = last;
    result.best = resume->best;
  }

  if (hooks.on_stage_begin) hooks.on_stage_begin(model);

  const std::size_t patience = cfg.early_stopping.patience;
  for (std::size_t epoch = start + 1; epoch <= cfg.epochs; ++epoch) {
    if (patience > 0 && best_epoch > 0 && since_best >= patience) {
      result.stopped_early = true;
      break;
    }
    const EpochStats stats = train_epoch(model, data.train, pipeline, optimizer, cfg, stage, epoch, options.threads);
    const MetricsReport val = evaluate(model, data.validation, options.eval_batch_size);

    EpochLog log;
    log.stage = stage;
    log.epoch = epoch;
    log.train_loss = stats.loss;
    log.train_accuracy = stats.accuracy;
    log.val_loss = val.loss;
    log.accuracy = val.accuracy;
    log.f1_macro = val.f1_macro;
    log.auroc = hooks.auroc_override ? hooks.auroc_override(epoch, val.auroc) : val.auroc;
    if (data.test) {
      const MetricsReport test = evaluate(model, *data.test, options.eval_batch_size);
      log.test_accuracy = test.accuracy;
      log.test_auroc = test.auroc;
    }
    result.logs.push_back(log);

    // AUROC saturates on easy validation sets; lower validation loss breaks
    // ties so selection keeps tracking progress.
    const bool improved = log.auroc > best_auroc ||
                          (log.auroc == best_auroc && best_epoch > 0 && log.val_loss < result.logs[best_epoch - 1].val_loss);
    if (improved) {
      best_auroc = log.auroc;
      best_epoch = epoch;
      since_best = 0;
    } else {
      ++since_best;
    }

    Checkpoint ck = capture(model);
    ck.optimizer = optimizer;
    ck.stage = stage;
    ck.epoch = epoch;
    ck.seed = cfg.seed;
    ck.stage_fingerprint = cfg.fingerprint();
    ck.best_auroc = best_auroc;
    ck.best_epoch = best_epoch;
    ck.epochs_since_best = since_best;
    ck.history = result.logs;
    result.last = std::move(ck);
    if (improved) result.best = result.last;
    if (hooks.on_epoch_end) hooks.on_epoch_end(log, result.last, improved ? &result.best : nullptr);

    if (patience > 0 && since_best >= patience && epoch < cfg.epochs) {
      result.stopped_early = true;
      break;
    }
  }
  if (result.best.parameters.empty()) throw StateError("run_stage: no epoch completed");
  load_parameters(model, result.best);
  return result;
}

namespace {

MetricsReport final_report(const DeitModel& model, const StageData& data, const RunOptions& options) {
  return evaluate(model, data.test ? *data.test : data.validation, options.eval_batch_size);
}

}  // namespace

TwoStageResult run_two_stage(DeitModel& model, const StageData& data, const AugmentSpec& augment,
                             const StageConfig& stage1, const std::optional<StageConfig>& stage2,
                             const StageHooks& hooks1, const StageHooks& hooks2, const RunOptions& options) {
  TwoStageResult out;
  out.stage1 = run_stage(model, data, augment, stage1, 1, std::nullopt, hooks1, options);
  out.report1 = final_report(model, data, options);
  if (stage2) {
    out.stage2 = run_stage(model, data, augment, *stage2, 2, std::nullopt, hooks2, options);
    out.report2 = final_report(model, data, options);
  }
  return out;
}

AblationResult run_ablation(DeitModel& model, const StageData& data, const AugmentSpec& augment,
                            const StageConfig& stage1, const StageConfig& stage2, const RunOptions& options) {
  AblationResult out;
  out.stages.push_back(run_stage(model, data, augment, stage1, 1, std::nullopt, {}, options));
  const MetricsReport t1 = final_report(model, data, options);

  StageConfig standard = stage2;
  standard.pipeline = PipelineKind::Stage1;
  DeitModel m2 = restore_model(out.stages[0].best);
  out.stages.push_back(run_stage(m2, data, augment, standard, 2, std::nullopt, {}, options));
  const MetricsReport t2 = final_report(m2, data, options);

  StageConfig affine = stage2;
  affine.pipeline = PipelineKind::Stage2;
  DeitModel m3 = restore_model(out.stages[0].best);
  out.stages.push_back(run_stage(m3, data, augment, affine, 2, std::nullopt, {}, options));
  const MetricsReport t3 = final_report(m3, data, options);

  const std::string base = std::to_string(stage1.epochs);
  const std::string extended = base + "+" + std::to_string(stage2.epochs);
  out.rows = {
      {"T1", "Stage I only, standard augmentations", base, false, t1},
      {"T2", "Stage I, then stage II with standard augmentations", extended, false, t2},
      {"T3", "Stage I, then stage II with affine and photometric augmentations", extended, true, t3},
  };
  return out;
}

}  // namespace deitfake
