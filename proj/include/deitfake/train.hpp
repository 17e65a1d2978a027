#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "deitfake/augment.hpp"
#include "deitfake/data.hpp"
#include "deitfake/metrics.hpp"
#include "deitfake/model.hpp"

namespace deitfake {

// Mean over the batch of -log softmax(logits)[label], in fused log-softmax
// form. logits is [B, C]; labels are class ids < C.
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels);

enum class PipelineKind : std::uint8_t { Stage1, Stage2 };

std::string_view pipeline_kind_name(PipelineKind kind);
Pipeline build_pipeline(PipelineKind kind, const AugmentSpec& spec);

// Monitors validation AUROC, mode max. patience 0 disables stopping.
struct EarlyStopping {
  std::size_t patience = 2;
  friend bool operator==(const EarlyStopping&, const EarlyStopping&) = default;
};

struct StageConfig {
  std::size_t epochs = 5;
  std::size_t batch_size = 128;
  double learning_rate = 2e-5;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Global gradient-norm clip applied before the update; 0 disables it.
  double max_grad_norm = 0.0;
  PipelineKind pipeline = PipelineKind::Stage1;
  FreezeSpec freeze;
  EarlyStopping early_stopping;
  std::uint64_t seed = 0;

  // Throws ContractError.
  void validate() const;
  // Stable digest of every field, stored in checkpoints to detect resuming
  // under a different configuration.
  std::uint64_t fingerprint() const;

  friend bool operator==(const StageConfig&, const StageConfig&) = default;
};

struct OptimizerState {
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
  std::uint64_t t = 0;

  // Zero moments shaped like model.parameters().
  static OptimizerState for_model(const DeitModel& model);
  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

struct AdamWHyper {
  double learning_rate = 2e-5;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double max_grad_norm = 0.0;  // 0 disables clipping
};

// One bias-corrected AdamW update of a single buffer at step t (t >= 1),
// with g = grad_scale * grad:
//   theta -= lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * theta)
void adamw_update(std::span<float> theta, std::span<const float> grad, std::span<float> m, std::span<float> v,
                  std::uint64_t t, const AdamWHyper& hyper, double grad_scale = 1.0);

// L2 norm over the gradients of all trainable parameters.
double global_grad_norm(const std::vector<NamedParameter>& params);

// Advances state.t and updates every trainable parameter. Frozen parameters
// are skipped entirely. With max_grad_norm > 0, gradients are scaled so
// their global norm does not exceed it. A trainable parameter without a gradient buffer is
// treated as having a zero gradient. Throws NumericError naming the first
// parameter with a non-finite gradient, before anything is modified.
void adamw_step(const std::vector<NamedParameter>& params, OptimizerState& state, const AdamWHyper& hyper);
void adamw_step(const DeitModel& model, OptimizerState& state, const StageConfig& cfg);

// ---------------------------------------------------------------------------
// Data handed to the trainer

// Decoded training images at native resolution.
struct TrainSet {
  std::vector<ImageBuffer> images;
  std::vector<Label> labels;
  std::size_t size() const noexcept { return labels.size(); }
};

// Pipeline outputs fixed once, ready for batched evaluation.
struct EvalSet {
  std::vector<Tensor> inputs;  // each [3, H, W]
  std::vector<Label> labels;
  std::size_t size() const noexcept { return labels.size(); }
};

TrainSet load_train_set(const SampleManifest& manifest, ImageSource& source);
// Sample i is transformed with RngStream::for_sample(seed, 0, i), so random
// pipelines (warp perturbations) still give a fixed set.
EvalSet materialize(const SampleManifest& manifest, ImageSource& source, const Pipeline& pipeline,
                    std::uint64_t seed = 0, std::size_t threads = 1);

struct StageData {
  TrainSet train;
  EvalSet validation;
  // Scored every epoch when present; never used for model selection.
  std::optional<EvalSet> test;
};

// ---------------------------------------------------------------------------
// Epoch loop

struct EpochStats {
  double loss = 0.0;      // mean per-sample loss
  double accuracy = 0.0;  // running accuracy on the augmented batches
};

// One pass: augment -> forward -> loss -> backward -> AdamW -> zero grads.
// Sample i of epoch e draws from RngStream::for_sample(cfg.seed ^ stage salt, e, i).
EpochStats train_epoch(DeitModel& model, const TrainSet& data, const Pipeline& pipeline, OptimizerState& optimizer,
                       const StageConfig& cfg, std::uint32_t stage, std::size_t epoch, std::size_t threads = 1);

// fake-probabilities, softmax[:, Fake]
std::vector<double> predict_scores(const DeitModel& model, const EvalSet& data, std::size_t batch_size = 64,
                                   double* mean_loss = nullptr);
MetricsReport evaluate(const DeitModel& model, const EvalSet& data, std::size_t batch_size = 64);
// Throws ContractError for an empty manifest or a random pipeline.
MetricsReport evaluate(const DeitModel& model, const SampleManifest& manifest, ImageSource& source,
                       const Pipeline& eval_pipeline);

struct EpochLog {
  std::uint32_t stage = 1;
  std::size_t epoch = 1;  // 1-based within the stage
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double accuracy = 0.0;  // validation
  double f1_macro = 0.0;
  double auroc = 0.0;
  std::optional<double> test_accuracy;
  std::optional<double> test_auroc;

  friend bool operator==(const EpochLog&, const EpochLog&) = default;
};

// One JSON object per line.
std::string epoch_log_json(const EpochLog& log);
EpochLog parse_epoch_log(const std::string& line);

// ---------------------------------------------------------------------------
// Checkpoints

struct ParameterArray {
  std::string name;
  Shape shape;
  bool trainable = true;
  std::vector<float> data;
  friend bool operator==(const ParameterArray&, const ParameterArray&) = default;
};

struct Checkpoint {
  ModelConfig config;
  std::vector<ParameterArray> parameters;
  OptimizerState optimizer;
  std::uint32_t stage = 1;
  std::size_t epoch = 0;  // completed epochs within the stage
  std::uint64_t seed = 0;
  std::uint64_t stage_fingerprint = 0;
  double best_auroc = 0.0;
  std::size_t best_epoch = 0;
  std::size_t epochs_since_best = 0;
  std::vector<EpochLog> history;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

Checkpoint capture(const DeitModel& model);
// Fresh model holding the checkpoint's parameters and trainability flags.
// Throws CompatibilityError on a malformed parameter set.
DeitModel restore_model(const Checkpoint& checkpoint);
// Copies parameters into an existing model whose config must match.
void load_parameters(DeitModel& model, const Checkpoint& checkpoint);

// Binary container, all integers and floats little-endian:
//   "DTFK" u32 version
//   config: u64 image_size patch_size hidden_dim num_layers num_heads mlp_ratio
//           num_classes, u8 distillation token, f32 layer_norm_eps
//   u32 stage, u64 epoch, u64 seed, u64 stage_fingerprint
//   f64 best_auroc, u64 best_epoch, u64 epochs_since_best
//   u64 parameter count, then per parameter:
//     u32 name length, name bytes, u8 trainable, u32 rank, u64 dims[rank], f32 data
//   u64 optimizer step, u64 moment count, then per moment: u64 n, f32 m[n], f32 v[n]
//   u64 history length, then per log: u32 stage, u64 epoch, f64 train_loss
//     train_accuracy val_loss accuracy f1_macro auroc, u8 has_test, f64 test
//     accuracy and test auroc when present
void write_checkpoint(std::ostream& os, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(std::istream& is);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

inline constexpr std::uint32_t kCheckpointVersion = 1;

// ---------------------------------------------------------------------------
// Stages

struct StageHooks {
  // Replaces the measured validation AUROC of an epoch (1-based); for tests.
  std::function<double(std::size_t epoch, double measured)> auroc_override;
  // Called before the first optimizer step of the stage.
  std::function<void(const DeitModel&)> on_stage_begin;
  // Called after each epoch with the running checkpoint, and the best one
  // when this epoch improved on it.
  std::function<void(const EpochLog&, const Checkpoint& last, const Checkpoint* best)> on_epoch_end;
};

// Interrupted-stage state: the last checkpoint written and the best one so
// far.
struct StageResume {
  Checkpoint last;
  Checkpoint best;
};

struct StageResult {
  Checkpoint best;
  Checkpoint last;
  std::vector<EpochLog> logs;
  bool stopped_early = false;
};

struct RunOptions {
  std::size_t threads = 1;
  std::size_t eval_batch_size = 64;
};

// Trains model in place for one stage with per-epoch validation. On return
// the model holds the best-AUROC weights. An epoch improves on the best when
// its AUROC is higher, or equal with a lower validation loss; otherwise the
// earlier epoch is kept.
StageResult run_stage(DeitModel& model, const StageData& data, const AugmentSpec& augment, const StageConfig& cfg,
                      std::uint32_t stage, const std::optional<StageResume>& resume = std::nullopt,
                      const StageHooks& hooks = {}, const RunOptions& options = {});

struct TwoStageResult {
  StageResult stage1;
  std::optional<StageResult> stage2;
  // Test-set reports for each stage's selected weights; validation reports
  // when no test set is present.
  MetricsReport report1;
  std::optional<MetricsReport> report2;
};

// Stage 1, then (when stage2 is given) stage 2 starting from the stage-1 best
// weights with a fresh optimizer and stage2.freeze applied.
TwoStageResult run_two_stage(DeitModel& model, const StageData& data, const AugmentSpec& augment,
                             const StageConfig& stage1, const std::optional<StageConfig>& stage2,
                             const StageHooks& hooks1 = {}, const StageHooks& hooks2 = {},
                             const RunOptions& options = {});

struct AblationResult {
  std::vector<AblationRow> rows;  // T1, T2, T3
  std::vector<StageResult> stages;  // shared stage 1, T2 phase, T3 phase
};

// T1: stage 1 only. T2: T1 plus a stage-2 phase (stage2.epochs, one by
// default) with standard augmentations. T3: the same phase with the stage-2
// augmentations. T2 and T3 reuse the T1 stage-1 run and differ only in the
// pipeline of the extra phase. On return model holds the T1 weights.
AblationResult run_ablation(DeitModel& model, const StageData& data, const AugmentSpec& augment,
                            const StageConfig& stage1, const StageConfig& stage2, const RunOptions& options = {});

}  // namespace deitfake
