#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "deitfake/label.hpp"
#include "deitfake/tensor.hpp"

namespace deitfake {

struct ModelConfig {
  std::size_t image_size = 32;
  std::size_t patch_size = 8;
  std::size_t hidden_dim = 64;
  std::size_t num_layers = 2;
  std::size_t num_heads = 4;
  std::size_t mlp_ratio = 4;
  std::size_t num_classes = 2;
  bool use_distillation_token = false;
  float layer_norm_eps = 1e-6f;

  // 32px images, 8px patches, width 64, 2 blocks, 4 heads.
  static ModelConfig desk();
  // DeiT-base/16 at 224px: 196 patches, width 768, 12 blocks, 12 heads.
  static ModelConfig full_scale();

  // Throws ContractError when an architectural invariant fails.
  void validate() const;

  std::size_t grid() const { return image_size / patch_size; }
  std::size_t num_patches() const { return grid() * grid(); }
  std::size_t num_special_tokens() const { return use_distillation_token ? 2 : 1; }
  std::size_t num_tokens() const { return num_patches() + num_special_tokens(); }
  std::size_t patch_dim() const { return 3 * patch_size * patch_size; }
  std::size_t head_dim() const { return hidden_dim / num_heads; }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]
};

struct LayerNormParams {
  Tensor gain;
  Tensor bias;
};

struct EncoderBlock {
  LayerNormParams norm1;
  Linear query;
  Linear key;
  Linear value;
  Linear proj;
  LayerNormParams norm2;
  Linear fc1;
  Linear fc2;
};

struct NamedParameter {
  std::string name;
  Tensor tensor;
  bool trainable() const { return tensor.requires_grad(); }
};

// Half-open block range [block_begin, block_end) plus the embedding group.
// The final layer norm follows the last block: it is frozen exactly when the
// last block is.
struct FreezeSpec {
  std::size_t block_begin = 0;
  std::size_t block_end = 0;
  bool freeze_embeddings = false;

  static FreezeSpec none() { return {}; }
  friend bool operator==(const FreezeSpec&, const FreezeSpec&) = default;
};

class DeitModel {
 public:
  DeitModel(const ModelConfig& config, std::uint64_t seed);

  DeitModel(DeitModel&&) noexcept = default;
  DeitModel& operator=(DeitModel&&) noexcept = default;
  DeitModel(const DeitModel&) = delete;
  DeitModel& operator=(const DeitModel&) = delete;

  // Deep copy: no storage shared with the original.
  DeitModel clone() const;

  const ModelConfig& config() const noexcept { return config_; }

  // All parameters in a fixed canonical order. The returned tensors are
  // handles into the model.
  std::vector<NamedParameter> parameters() const;

  void zero_grad();

  Linear patch_projection;
  Tensor class_token;                        // [1, D]
  std::optional<Tensor> distillation_token;  // [1, D]
  Tensor positional_embedding;               // [tokens, D]
  std::vector<EncoderBlock> blocks;
  LayerNormParams final_norm;
  Linear head;  // [D, classes]

 private:
  DeitModel() = default;
  friend DeitModel replace_head(DeitModel model, std::size_t num_classes, std::uint64_t seed);
  ModelConfig config_;
};

// Optional taps into the forward pass.
struct ForwardTrace {
  std::vector<Tensor> attention;  // per block, [B*heads, T, T]
  Tensor features;                // class-token state after the final norm, [B, D]
};

// [3,H,W] -> [patches, 3*p*p] or [B,3,H,W] -> [B, patches, 3*p*p].
// Patches are scanned row-major; each one is flattened channel-major.
Tensor patchify(const Tensor& images, std::size_t patch_size);

// Logits [B, num_classes] for a [B,3,H,W] batch.
Tensor forward(const DeitModel& model, const Tensor& batch, ForwardTrace* trace = nullptr);

// Fresh head with num_classes outputs; every other parameter carried over
// bit for bit.
DeitModel replace_head(DeitModel model, std::size_t num_classes, std::uint64_t seed);

void apply_freeze(DeitModel& model, const FreezeSpec& spec);

std::size_t parameter_count(const DeitModel& model);
// Same count from the architecture alone, without allocating weights.
std::size_t parameter_count(const ModelConfig& config);

}  // namespace deitfake
