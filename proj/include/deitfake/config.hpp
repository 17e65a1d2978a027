#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "deitfake/augment.hpp"
#include "deitfake/data.hpp"
#include "deitfake/model.hpp"
#include "deitfake/train.hpp"

namespace deitfake {

struct DataConfig {
  // Exactly one of manifest and synthetic is set.
  std::optional<std::filesystem::path> manifest;
  std::optional<SyntheticSpec> synthetic;
  double train_fraction = 0.9;
  // Share of the train split held out for per-epoch validation.
  double validation_fraction = 0.1;
  bool balance = true;
  // Split before balancing, so duplicates stay inside the train split. The
  // default order (balance, then split) lets copies of one image land on both
  // sides.
  bool split_before_balance = false;

  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

// Warps applied once to the test split to build a perturbed benchmark.
struct TestPerturbation {
  PerspectiveSpec perspective{0.2, 1.0};
  ElasticSpec elastic{50.0, 5.0};
  std::uint64_t seed = 77;

  friend bool operator==(const TestPerturbation&, const TestPerturbation&) = default;
};

struct RunConfig {
  std::string preset = "desk";
  ModelConfig model;
  AugmentSpec augment;
  StageConfig stage1;
  StageConfig stage2;
  DataConfig data;
  std::optional<TestPerturbation> test_perturbation;
  std::filesystem::path output_dir = "runs/desk";
  // Drives model init, data shuffling, splits and augmentation.
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  // Desk model, desk optimizer settings, 256 + 256 synthetic images.
  static RunConfig desk();
  // Desk settings sized for the T1/T2/T3 comparison: 1000 images per class,
  // batch 16, unclipped updates at lr 3e-4 (stage 2: 1e-4), and a
  // warp-perturbed test split.
  static RunConfig desk_ablation();
  // Full-scale model with the published recipe. Needs data.manifest.
  static RunConfig full();
  // Throws ValidationError for unknown names.
  static RunConfig preset_named(std::string_view name);
  static std::vector<std::string> preset_names();

  // Stage configs with the run seed folded in.
  StageConfig stage_config(std::uint32_t stage) const;

  // Throws ValidationError, naming the offending field.
  void validate() const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// JSON text. Every field is written, so a dump is a complete, editable
// config. Parsing starts from the preset named by the "preset" key (desk when
// absent) and overrides the keys that are present; unknown keys are rejected.
std::string run_config_json(const RunConfig& config);
// Relative data.manifest paths resolve against base_dir. Throws ParseError for
// malformed JSON and ValidationError for bad keys or values.
RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const std::filesystem::path& path, const RunConfig& config);

}  // namespace deitfake
