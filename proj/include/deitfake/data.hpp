#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "deitfake/image.hpp"
#include "deitfake/label.hpp"
#include "deitfake/rng.hpp"

namespace deitfake {

enum class Origin : std::uint8_t { Original, Duplicate };

struct SampleRecord {
  std::string image_ref;  // path relative to the manifest, or a synth: descriptor
  Label label = Label::Real;
  Origin origin = Origin::Original;
  std::uint64_t id = 0;  // record identity within a manifest lineage

  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

struct ClassCounts {
  std::size_t fake = 0;
  std::size_t real = 0;

  std::size_t of(Label l) const noexcept { return l == Label::Fake ? fake : real; }
  std::size_t total() const noexcept { return fake + real; }
  friend bool operator==(const ClassCounts&, const ClassCounts&) = default;
};

struct SampleManifest {
  std::vector<SampleRecord> records;
  // Directory image paths are resolved against.
  std::filesystem::path base_dir;

  std::size_t size() const noexcept { return records.size(); }
  bool empty() const noexcept { return records.empty(); }
  ClassCounts class_counts() const;
  std::vector<Label> labels() const;
};

inline constexpr std::string_view kSyntheticPrefix = "synth:";

// Parses `<path>\t<label>[\t<origin>]` rows; `#` lines are comments. Ids are
// assigned by row order. Malformed rows raise ParseError with the line
// number; unknown labels raise ValidationError.
SampleManifest parse_manifest(std::istream& in);
// parse_manifest on a file, then checks that every path reference exists.
SampleManifest load_manifest(const std::filesystem::path& path);
void write_manifest(std::ostream& out, const SampleManifest& manifest);
void save_manifest(const std::filesystem::path& path, const SampleManifest& manifest);

// Duplicates minority-class records, sampled with replacement, until both
// classes match the majority count. Originals are kept in place and
// duplicates are appended.
SampleManifest oversample_balance(const SampleManifest& manifest, RngStream& rng);

struct SplitResult {
  SampleManifest train;
  SampleManifest test;
  std::vector<std::string> warnings;
};

// Per class, floor(count * fraction) records go to train after a seeded
// shuffle. The records left over from flooring go to train by largest
// fractional part (ties in label order) until train holds floor(N * fraction).
// Both outputs keep input order.
SplitResult stratified_split(const SampleManifest& manifest, double train_fraction, RngStream& rng);

// Index batches for one epoch. The order is a pure function of (seed, epoch);
// the final batch may be short.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t count, std::size_t batch_size, bool shuffle,
                                                    std::uint64_t seed, std::uint64_t epoch);

// ---------------------------------------------------------------------------
// Synthetic two-class dataset.
//
// Every image is a smooth random scene (colored blobs over a gradient
// background, an elliptical face region, mild sensor noise). Inside the face,
// fake images carry two signatures: row banding locked to the pixel grid,
// which resampling warps scramble, and a luminance lift of varying strength,
// which survives them. All content is a pure function of (seed, label, index).

struct SyntheticSpec {
  std::size_t real_count = 256;
  std::size_t fake_count = 256;
  std::size_t image_size = 64;
  double artifact_amplitude = 0.08;
  double artifact_period = 8.0;  // banding period, native pixels
  double tone_shift = 0.12;      // maximum luminance lift
  double noise_std = 0.02;
  std::uint64_t seed = 7;

  void validate() const;
  friend bool operator==(const SyntheticSpec&, const SyntheticSpec&) = default;
};

std::string synthetic_ref(Label label, std::size_t index);
ImageBuffer render_synthetic(const SyntheticSpec& spec, Label label, std::size_t index);
// Fakes first, then reals, each in index order.
SampleManifest synthetic_manifest(const SyntheticSpec& spec);

// Resolves image references to decoded images, caching each one.
class ImageSource {
 public:
  ImageSource() = default;
  explicit ImageSource(std::optional<SyntheticSpec> synthetic) : synthetic_(std::move(synthetic)) {}

  const ImageBuffer& load(const SampleManifest& manifest, const SampleRecord& record);
  const ImageBuffer& load(const std::filesystem::path& base_dir, const std::string& ref);

 private:
  std::optional<SyntheticSpec> synthetic_;
  std::map<std::string, ImageBuffer> cache_;
};

}  // namespace deitfake
