#include "deitfake/model.hpp"

#include <cmath>

#include "deitfake/errors.hpp"
#include "deitfake/rng.hpp"

namespace deitfake {

namespace {

constexpr double kInitStd = 0.02;

Tensor trunc_normal(Shape shape, RngStream& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<float>(kInitStd * rng.truncated_normal(2.0));
  t.set_requires_grad(true);
  return t;
}

Tensor filled(Shape shape, float value) {
  Tensor t(std::move(shape), value);
  t.set_requires_grad(true);
  return t;
}

Linear make_linear(std::size_t in, std::size_t out, RngStream& rng) {
  return Linear{trunc_normal({in, out}, rng), filled({out}, 0.0f)};
}

LayerNormParams make_norm(std::size_t d) { return LayerNormParams{filled({d}, 1.0f), filled({d}, 0.0f)}; }

Tensor deep(const Tensor& t) { return t.clone(); }
Linear deep(const Linear& l) { return Linear{l.weight.clone(), l.bias.clone()}; }
LayerNormParams deep(const LayerNormParams& n) { return LayerNormParams{n.gain.clone(), n.bias.clone()}; }

// x: [N, in] -> [N, out]
Tensor apply_linear(const Tensor& x, const Linear& l) { return ops::add_bias(ops::matmul(x, l.weight), l.bias); }

}  // namespace

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::full_scale() {
  ModelConfig c;
  c.image_size = 224;
  c.patch_size = 16;
  c.hidden_dim = 768;
  c.num_layers = 12;
  c.num_heads = 12;
  c.mlp_ratio = 4;
  c.num_classes = 2;
  return c;
}

void ModelConfig::validate() const {
  if (patch_size == 0 || image_size == 0 || image_size % patch_size != 0) {
    throw ContractError("image_size must be a positive multiple of patch_size");
  }
  if (num_heads == 0 || hidden_dim == 0 || hidden_dim % num_heads != 0) {
    throw ContractError("hidden_dim must be a positive multiple of num_heads");
  }
  if (num_classes < 2) throw ContractError("num_classes must be at least 2");
  if (mlp_ratio == 0) throw ContractError("mlp_ratio must be positive");
  if (!(layer_norm_eps >= 0.0f)) throw ContractError("layer_norm_eps must be non-negative");
}

DeitModel::DeitModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  RngStream rng(seed);
  const std::size_t d = config_.hidden_dim;
  patch_projection = make_linear(config_.patch_dim(), d, rng);
  class_token = trunc_normal({1, d}, rng);
  if (config_.use_distillation_token) distillation_token = trunc_normal({1, d}, rng);
  positional_embedding = trunc_normal({config_.num_tokens(), d}, rng);
  const std::size_t hidden = d * config_.mlp_ratio;
  blocks.reserve(config_.num_layers);
  for (std::size_t i = 0; i < config_.num_layers; ++i) {
    EncoderBlock b;
    b.norm1 = make_norm(d);
    b.query = make_linear(d, d, rng);
    b.key = make_linear(d, d, rng);
    b.value = make_linear(d, d, rng);
    b.proj = make_linear(d, d, rng);
    b.norm2 = make_norm(d);
    b.fc1 = make_linear(d, hidden, rng);
    b.fc2 = make_linear(hidden, d, rng);
    blocks.push_back(std::move(b));
  }
  final_norm = make_norm(d);
  head = make_linear(d, config_.num_classes, rng);
}

DeitModel DeitModel::clone() const {
  DeitModel m;
  m.config_ = config_;
  m.patch_projection = deep(patch_projection);
  m.class_token = deep(class_token);
  if (distillation_token) m.distillation_token = deep(*distillation_token);
  m.positional_embedding = deep(positional_embedding);
  for (const auto& b : blocks) {
    m.blocks.push_back(EncoderBlock{deep(b.norm1), deep(b.query), deep(b.key), deep(b.value), deep(b.proj),
                                    deep(b.norm2), deep(b.fc1), deep(b.fc2)});
  }
  m.final_norm = deep(final_norm);
  m.head = deep(head);
  return m;
}

std::vector<NamedParameter> DeitModel::parameters() const {
  std::vector<NamedParameter> out;
  auto lin = [&](const std::string& name, const Linear& l) {
    out.push_back({name + ".weight", l.weight});
    out.push_back({name + ".bias", l.bias});
  };
  auto norm = [&](const std::string& name, const LayerNormParams& n) {
    out.push_back({name + ".gain", n.gain});
    out.push_back({name + ".bias", n.bias});
  };
  lin("patch_embed", patch_projection);
  out.push_back({"cls_token", class_token});
  if (distillation_token) out.push_back({"dist_token", *distillation_token});
  out.push_back({"pos_embed", positional_embedding});
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto p = "blocks." + std::to_string(i) + ".";
    const auto& b = blocks[i];
    norm(p + "norm1", b.norm1);
    lin(p + "attn.query", b.query);
    lin(p + "attn.key", b.key);
    lin(p + "attn.value", b.value);
    lin(p + "attn.proj", b.proj);
    norm(p + "norm2", b.norm2);
    lin(p + "mlp.fc1", b.fc1);
    lin(p + "mlp.fc2", b.fc2);
  }
  norm("final_norm", final_norm);
  lin("head", head);
  return out;
}

void DeitModel::zero_grad() {
  for (auto& p : parameters()) p.tensor.zero_grad();
}

Tensor patchify(const Tensor& images, std::size_t patch_size) {
  const bool batched = images.rank() == 4;
  if (!batched && images.rank() != 3) {
    throw DimensionError("patchify: expected [3,H,W] or [B,3,H,W], got " + shape_str(images.shape()));
  }
  const std::size_t off = batched ? 1 : 0;
  const std::size_t c = images.dim(off);
  const std::size_t h = images.dim(off + 1);
  const std::size_t w = images.dim(off + 2);
  if (c != 3) throw DimensionError("patchify: expected 3 channels");
  if (patch_size == 0 || h % patch_size != 0 || w % patch_size != 0) {
    throw DimensionError("patchify: " + std::to_string(h) + "x" + std::to_string(w) +
                         " is not divisible by patch size " + std::to_string(patch_size));
  }
  const std::size_t gh = h / patch_size;
  const std::size_t gw = w / patch_size;
  const std::size_t p = patch_size;
  if (!batched) {
    Tensor t = ops::reshape(images, {c, gh, p, gw, p});
    t = ops::permute(t, {1, 3, 0, 2, 4});
    return ops::reshape(t, {gh * gw, c * p * p});
  }
  const std::size_t b = images.dim(0);
  Tensor t = ops::reshape(images, {b, c, gh, p, gw, p});
  t = ops::permute(t, {0, 2, 4, 1, 3, 5});
  return ops::reshape(t, {b, gh * gw, c * p * p});
}

Tensor forward(const DeitModel& model, const Tensor& batch, ForwardTrace* trace) {
  const auto& cfg = model.config();
  if (batch.rank() != 4 || batch.dim(1) != 3 || batch.dim(2) != cfg.image_size || batch.dim(3) != cfg.image_size) {
    throw DimensionError("forward: expected [B,3," + std::to_string(cfg.image_size) + "," +
                         std::to_string(cfg.image_size) + "], got " + shape_str(batch.shape()));
  }
  const std::size_t b = batch.dim(0);
  const std::size_t d = cfg.hidden_dim;
  const std::size_t heads = cfg.num_heads;
  const std::size_t hd = cfg.head_dim();
  const std::size_t np = cfg.num_patches();
  const std::size_t t = cfg.num_tokens();

  Tensor patches = ops::reshape(patchify(batch, cfg.patch_size), {b * np, cfg.patch_dim()});
  Tensor x = ops::reshape(apply_linear(patches, model.patch_projection), {b, np, d});

  Tensor special = model.class_token;
  if (model.distillation_token) special = ops::concat(special, *model.distillation_token, 0);
  x = ops::concat(ops::broadcast_leading(special, b), x, 1);
  x = ops::add_bias(x, model.positional_embedding);

  const float attn_scale = 1.0f / std::sqrt(static_cast<float>(hd));
  auto split_heads = [&](const Tensor& y) {
    Tensor r = ops::reshape(y, {b, t, heads, hd});
    r = ops::permute(r, {0, 2, 1, 3});
    return ops::reshape(r, {b * heads, t, hd});
  };

  if (trace) trace->attention.clear();
  for (const auto& blk : model.blocks) {
    Tensor y = ops::reshape(ops::layer_norm(x, blk.norm1.gain, blk.norm1.bias, cfg.layer_norm_eps), {b * t, d});
    Tensor q = split_heads(apply_linear(y, blk.query));
    Tensor k = split_heads(apply_linear(y, blk.key));
    Tensor v = split_heads(apply_linear(y, blk.value));
    Tensor attn = ops::softmax(ops::scale(ops::matmul(q, ops::transpose(k)), attn_scale));
    if (trace) trace->attention.push_back(attn);
    Tensor ctx = ops::reshape(ops::matmul(attn, v), {b, heads, t, hd});
    ctx = ops::reshape(ops::permute(ctx, {0, 2, 1, 3}), {b * t, d});
    x = ops::add(x, ops::reshape(apply_linear(ctx, blk.proj), {b, t, d}));

    Tensor z = ops::reshape(ops::layer_norm(x, blk.norm2.gain, blk.norm2.bias, cfg.layer_norm_eps), {b * t, d});
    z = apply_linear(ops::gelu(apply_linear(z, blk.fc1)), blk.fc2);
    x = ops::add(x, ops::reshape(z, {b, t, d}));
  }

  x = ops::layer_norm(x, model.final_norm.gain, model.final_norm.bias, cfg.layer_norm_eps);
  Tensor features = ops::select(x, 1, 0);
  if (trace) trace->features = features;
  return apply_linear(features, model.head);
}

DeitModel replace_head(DeitModel model, std::size_t num_classes, std::uint64_t seed) {
  if (num_classes < 2) throw ContractError("replace_head: num_classes must be at least 2");
  RngStream rng(hash_combine(seed, 0x4845414455ULL));
  const bool trainable = model.head.weight.requires_grad();
  model.head = make_linear(model.config_.hidden_dim, num_classes, rng);
  model.head.weight.set_requires_grad(trainable);
  model.head.bias.set_requires_grad(trainable);
  model.config_.num_classes = num_classes;
  return model;
}

void apply_freeze(DeitModel& model, const FreezeSpec& spec) {
  const std::size_t n = model.blocks.size();
  if (spec.block_begin > spec.block_end || spec.block_end > n) {
    throw ContractError("apply_freeze: block range [" + std::to_string(spec.block_begin) + ", " +
                        std::to_string(spec.block_end) + ") outside [0, " + std::to_string(n) + "]");
  }
  auto set = [](const Tensor& t, bool trainable) {
    Tensor h = t;
    h.set_requires_grad(trainable);
  };
  auto set_lin = [&](const Linear& l, bool on) {
    set(l.weight, on);
    set(l.bias, on);
  };
  auto set_norm = [&](const LayerNormParams& p, bool on) {
    set(p.gain, on);
    set(p.bias, on);
  };
  const bool embed_on = !spec.freeze_embeddings;
  set_lin(model.patch_projection, embed_on);
  set(model.class_token, embed_on);
  if (model.distillation_token) set(*model.distillation_token, embed_on);
  set(model.positional_embedding, embed_on);
  for (std::size_t i = 0; i < n; ++i) {
    const bool on = i < spec.block_begin || i >= spec.block_end;
    const auto& b = model.blocks[i];
    set_norm(b.norm1, on);
    set_lin(b.query, on);
    set_lin(b.key, on);
    set_lin(b.value, on);
    set_lin(b.proj, on);
    set_norm(b.norm2, on);
    set_lin(b.fc1, on);
    set_lin(b.fc2, on);
  }
  const bool last_frozen = n > 0 && spec.block_end == n && spec.block_begin < n;
  set_norm(model.final_norm, !last_frozen);
  set_lin(model.head, true);
}

std::size_t parameter_count(const DeitModel& model) {
  std::size_t total = 0;
  for (const auto& p : model.parameters()) total += p.tensor.numel();
  return total;
}

std::size_t parameter_count(const ModelConfig& c) {
  c.validate();
  const std::size_t d = c.hidden_dim;
  const std::size_t hidden = d * c.mlp_ratio;
  const std::size_t block = 2 * d + 4 * (d * d + d) + 2 * d + (d * hidden + hidden) + (hidden * d + d);
  return (c.patch_dim() * d + d) + c.num_special_tokens() * d + c.num_tokens() * d + c.num_layers * block +
         2 * d + (d * c.num_classes + c.num_classes);
}

}  // namespace deitfake
