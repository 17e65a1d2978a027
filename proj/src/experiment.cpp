#include "deitfake/experiment.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "deitfake/errors.hpp"

namespace deitfake {

namespace {

using Json = nlohmann::ordered_json;

constexpr std::uint64_t kBalanceSalt = 0x42414c414e4345ULL;
constexpr std::uint64_t kSplitSalt = 0x53504c4954ULL;
constexpr std::uint64_t kValidationSalt = 0x56414c4944ULL;

Json counts_json(const SampleManifest& m) {
  const ClassCounts c = m.class_counts();
  return Json{{"fake", c.fake}, {"real", c.real}, {"total", c.total()}};
}

std::size_t duplicate_count(const SampleManifest& m) {
  std::size_t n = 0;
  for (const auto& r : m.records) n += r.origin == Origin::Duplicate;
  return n;
}

}  // namespace

PreparedData prepare_data(const RunConfig& config) {
  const DataConfig& dc = config.data;
  const SampleManifest input = dc.synthetic ? synthetic_manifest(*dc.synthetic) : load_manifest(*dc.manifest);
  if (input.empty()) throw ValidationError("dataset is empty");
  const ClassCounts counts = input.class_counts();
  if (dc.balance && (counts.fake == 0 || counts.real == 0)) {
    throw ValidationError("dataset needs samples of both classes to balance (fake " + std::to_string(counts.fake) +
                          ", real " + std::to_string(counts.real) + ")");
  }

  RngStream balance_rng(hash_combine(config.seed, kBalanceSalt));
  RngStream split_rng(hash_combine(config.seed, kSplitSalt));
  RngStream validation_rng(hash_combine(config.seed, kValidationSalt));

  PreparedData out;
  SplitResult split;
  SampleManifest balanced;
  if (dc.split_before_balance) {
    split = stratified_split(input, dc.train_fraction, split_rng);
    if (dc.balance) split.train = oversample_balance(split.train, balance_rng);
    balanced = split.train;
  } else {
    balanced = dc.balance ? oversample_balance(input, balance_rng) : input;
    split = stratified_split(balanced, dc.train_fraction, split_rng);
  }
  SplitResult carve = stratified_split(split.train, 1.0 - dc.validation_fraction, validation_rng);
  out.train = std::move(carve.train);
  out.validation = std::move(carve.test);
  out.test = split.test;
  for (auto* w : {&split.warnings, &carve.warnings}) out.warnings.insert(out.warnings.end(), w->begin(), w->end());

  std::set<std::string> fit_refs;
  for (const auto* m : {&out.train, &out.validation}) {
    for (const auto& r : m->records) fit_refs.insert(r.image_ref);
  }
  std::size_t leaked = 0;
  for (const auto& r : out.test.records) leaked += fit_refs.count(r.image_ref);
  if (leaked > 0) {
    out.warnings.push_back(std::to_string(leaked) +
                           " test records share an image with the train or validation split (balance-then-split "
                           "order duplicates across splits)");
  }

  Json p;
  p["seed"] = config.seed;
  if (dc.synthetic) {
    const auto& s = *dc.synthetic;
    p["source"] = "synthetic";
    p["synthetic"] = {{"real_count", s.real_count},        {"fake_count", s.fake_count},
                      {"image_size", s.image_size},        {"artifact_amplitude", s.artifact_amplitude},
                      {"artifact_period", s.artifact_period}, {"tone_shift", s.tone_shift},
                      {"noise_std", s.noise_std},          {"seed", s.seed}};
  } else {
    p["source"] = "manifest";
    p["manifest"] = dc.manifest->generic_string();
  }
  p["order"] = dc.split_before_balance ? "split-then-balance" : "balance-then-split";
  p["balance"] = dc.balance;
  p["input"] = counts_json(input);
  p["balanced"] = counts_json(balanced);
  p["duplicates_added"] = duplicate_count(balanced);
  p["train_fraction"] = dc.train_fraction;
  p["validation_fraction"] = dc.validation_fraction;
  p["split"] = {{"train", counts_json(split.train)}, {"test", counts_json(split.test)}};
  p["train"] = counts_json(out.train);
  p["validation"] = counts_json(out.validation);
  p["test"] = counts_json(out.test);
  p["test_images_shared_with_train"] = leaked;
  p["warnings"] = out.warnings;
  out.provenance = p.dump(2) + "\n";
  return out;
}

namespace {

SampleManifest rebased(const SampleManifest& m, const std::filesystem::path& dir) {
  SampleManifest out = m;
  out.base_dir = dir;
  const auto target = std::filesystem::absolute(dir);
  for (auto& r : out.records) {
    if (r.image_ref.starts_with(kSyntheticPrefix)) continue;
    const auto source = std::filesystem::absolute(m.base_dir / r.image_ref).lexically_normal();
    r.image_ref = source.lexically_relative(target).generic_string();
  }
  return out;
}

}  // namespace

void write_prepared(const std::filesystem::path& dir, const PreparedData& data) {
  std::filesystem::create_directories(dir);
  save_manifest(dir / "train.tsv", rebased(data.train, dir));
  save_manifest(dir / "validation.tsv", rebased(data.validation, dir));
  save_manifest(dir / "test.tsv", rebased(data.test, dir));
  std::ofstream out(dir / "provenance.json");
  if (!out) throw IoError("cannot write " + (dir / "provenance.json").string());
  out << data.provenance;
}

PreparedData read_prepared(const std::filesystem::path& dir) {
  PreparedData out;
  for (auto [name, target] : {std::pair{"train.tsv", &out.train}, std::pair{"validation.tsv", &out.validation},
                              std::pair{"test.tsv", &out.test}}) {
    const auto path = dir / name;
    if (!std::filesystem::exists(path)) {
      throw ValidationError("missing " + path.string() + "; run `prepare` first");
    }
    *target = load_manifest(path);
  }
  if (std::ifstream in(dir / "provenance.json"); in) {
    std::ostringstream ss;
    ss << in.rdbuf();
    out.provenance = ss.str();
  }
  return out;
}

ImageSource make_image_source(const RunConfig& config) { return ImageSource(config.data.synthetic); }

Pipeline test_pipeline(const RunConfig& config) {
  if (!config.test_perturbation) return build_eval_pipeline(config.augment);
  const auto& t = *config.test_perturbation;
  return build_perturbation_pipeline(config.augment, t.perspective, t.elastic);
}

StageData load_stage_data(const RunConfig& config, const PreparedData& data, ImageSource& source) {
  if (data.train.empty()) throw ValidationError("train split is empty");
  if (data.validation.empty()) throw ValidationError("validation split is empty");
  StageData out;
  out.train = load_train_set(data.train, source);
  out.validation = materialize(data.validation, source, build_eval_pipeline(config.augment), 0, config.threads);
  if (!data.test.empty()) {
    const std::uint64_t seed = config.test_perturbation ? config.test_perturbation->seed : 0;
    out.test = materialize(data.test, source, test_pipeline(config), seed, config.threads);
  }
  return out;
}

}  // namespace deitfake
