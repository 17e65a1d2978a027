#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "deitfake/image.hpp"
#include "deitfake/rng.hpp"
#include "deitfake/tensor.hpp"

namespace deitfake {

struct ColorJitterSpec {
  double brightness = 0.2;
  double contrast = 0.2;
  double saturation = 0.2;
  double hue = 0.1;  // fraction of the hue circle
  friend bool operator==(const ColorJitterSpec&, const ColorJitterSpec&) = default;
};

struct PerspectiveSpec {
  double distortion_scale = 0.2;
  double p = 0.5;
  friend bool operator==(const PerspectiveSpec&, const PerspectiveSpec&) = default;
};

struct ElasticSpec {
  double alpha = 50.0;  // displacement scale, pixels
  double sigma = 5.0;   // smoothing, pixels
  friend bool operator==(const ElasticSpec&, const ElasticSpec&) = default;
};

struct AugmentSpec {
  std::size_t resize_to = 32;
  double hflip_p = 0.5;
  double rotation_max_deg = 15.0;
  std::optional<ColorJitterSpec> color_jitter;
  std::optional<PerspectiveSpec> perspective;
  std::optional<ElasticSpec> elastic;
  std::array<float, 3> normalize_mean{0.485f, 0.456f, 0.406f};
  std::array<float, 3> normalize_std{0.229f, 0.224f, 0.225f};

  // Standard augmentations only.
  static AugmentSpec stage1(std::size_t resize_to);
  // Standard augmentations plus color jitter, perspective and elastic warps.
  static AugmentSpec stage2(std::size_t resize_to);

  // Throws ContractError.
  void validate() const;

  friend bool operator==(const AugmentSpec&, const AugmentSpec&) = default;
};

// ---------------------------------------------------------------------------
// Individual transforms. Every op is a pure function of its arguments and the
// rng state it is handed.

ImageBuffer resize_bilinear(const ImageBuffer& img, std::size_t target);

ImageBuffer hflip(const ImageBuffer& img);
ImageBuffer random_hflip(const ImageBuffer& img, double p, RngStream& rng);

// Counter-clockwise rotation about the image centre, bilinear, zero fill.
ImageBuffer rotate(const ImageBuffer& img, double degrees);
ImageBuffer random_rotation(const ImageBuffer& img, double max_deg, RngStream& rng);

ImageBuffer adjust_brightness(const ImageBuffer& img, double factor);
ImageBuffer adjust_contrast(const ImageBuffer& img, double factor);
ImageBuffer adjust_saturation(const ImageBuffer& img, double factor);
// Rotates hue by offset (fraction of the circle).
ImageBuffer adjust_hue(const ImageBuffer& img, double offset);
// Brightness, contrast, saturation, hue, in that order.
ImageBuffer color_jitter(const ImageBuffer& img, const ColorJitterSpec& spec, RngStream& rng);

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

// Corner correspondences of one perspective draw, ordered top-left,
// top-right, bottom-right, bottom-left. Output pixels at `end` sample the
// input at `start`.
struct PerspectiveParams {
  std::array<Point2, 4> start;
  std::array<Point2, 4> end;
};

PerspectiveParams perspective_params(std::size_t width, std::size_t height, double distortion_scale, RngStream& rng);
ImageBuffer warp_perspective(const ImageBuffer& img, const PerspectiveParams& params);
ImageBuffer random_perspective(const ImageBuffer& img, double distortion_scale, double p, RngStream& rng);

// Per-pixel displacement, in pixels, [height][width] for each axis.
struct DisplacementField {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> dx;
  std::vector<float> dy;
};

DisplacementField elastic_field(std::size_t width, std::size_t height, double alpha, double sigma, RngStream& rng);
// Bilinear warp out(x, y) = img(x + dx, y + dy) with border replication.
ImageBuffer warp_displacement(const ImageBuffer& img, const DisplacementField& field);
ImageBuffer elastic_transform(const ImageBuffer& img, double alpha, double sigma, RngStream& rng);

// [3,H,W] tensor of (img - mean) / std.
Tensor normalize(const ImageBuffer& img, const std::array<float, 3>& mean, const std::array<float, 3>& std);
ImageBuffer denormalize(const Tensor& t, const std::array<float, 3>& mean, const std::array<float, 3>& std);

// ---------------------------------------------------------------------------
// Pipelines

enum class StepKind { Resize, HorizontalFlip, Rotation, ColorJitter, Perspective, Elastic, Normalize };

std::string_view step_name(StepKind kind);

// Called after each image-valued step, for debug dumps.
using StepObserver = std::function<void(std::size_t index, StepKind kind, const ImageBuffer& image)>;

class Pipeline {
 public:
  Pipeline(AugmentSpec spec, std::vector<StepKind> steps);

  const std::vector<StepKind>& steps() const noexcept { return steps_; }
  const AugmentSpec& spec() const noexcept { return spec_; }
  bool is_random() const;

  // Runs every step up to normalization and returns the image.
  ImageBuffer augment(const ImageBuffer& img, RngStream& rng, const StepObserver& observer = {}) const;
  // Full pipeline, ending in the normalized [3,H,W] tensor.
  Tensor apply(const ImageBuffer& img, RngStream& rng, const StepObserver& observer = {}) const;

 private:
  AugmentSpec spec_;
  std::vector<StepKind> steps_;
};

// resize -> hflip -> rotation -> normalize
Pipeline build_stage1_pipeline(const AugmentSpec& spec);
// resize -> hflip -> rotation -> color jitter -> perspective -> elastic -> normalize
Pipeline build_stage2_pipeline(const AugmentSpec& spec);
// resize -> normalize
Pipeline build_eval_pipeline(const AugmentSpec& spec);
// resize -> perspective (always applied) -> elastic -> normalize. Used to
// build warp-perturbed evaluation sets.
Pipeline build_perturbation_pipeline(const AugmentSpec& spec, const PerspectiveSpec& perspective,
                                     const ElasticSpec& elastic);

}  // namespace deitfake
