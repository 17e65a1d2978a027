#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "deitfake/config.hpp"
#include "deitfake/data.hpp"
#include "deitfake/train.hpp"

namespace deitfake {

struct PreparedData {
  SampleManifest train;
  SampleManifest validation;
  SampleManifest test;
  // JSON summary of where the records came from and how they were divided.
  std::string provenance;
  std::vector<std::string> warnings;
};

// Loads or synthesizes the dataset, balances and splits it (in the configured
// order), then carves the validation set out of the train split. A pure
// function of the config.
PreparedData prepare_data(const RunConfig& config);

// <dir>/train.tsv, validation.tsv, test.tsv and provenance.json. Image paths
// are rewritten relative to dir.
void write_prepared(const std::filesystem::path& dir, const PreparedData& data);
// Throws ValidationError when a manifest is missing.
PreparedData read_prepared(const std::filesystem::path& dir);

ImageSource make_image_source(const RunConfig& config);
// Evaluation pipeline for clean sets; the configured warp perturbation for
// the test split when one is set.
Pipeline test_pipeline(const RunConfig& config);
StageData load_stage_data(const RunConfig& config, const PreparedData& data, ImageSource& source);

}  // namespace deitfake
