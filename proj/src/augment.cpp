#include "deitfake/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "deitfake/errors.hpp"

namespace deitfake {

namespace {

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

// Bilinear sample; neighbours outside the image contribute zero.
float sample_zero(const ImageBuffer& img, std::size_t c, double x, double y) {
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const double wx = x - fx;
  const double wy = y - fy;
  const auto x0 = static_cast<long>(fx);
  const auto y0 = static_cast<long>(fy);
  const auto w = static_cast<long>(img.width);
  const auto h = static_cast<long>(img.height);
  double acc = 0.0;
  for (int dy = 0; dy < 2; ++dy) {
    const long yy = y0 + dy;
    if (yy < 0 || yy >= h) continue;
    const double wyy = dy ? wy : 1.0 - wy;
    for (int dx = 0; dx < 2; ++dx) {
      const long xx = x0 + dx;
      if (xx < 0 || xx >= w) continue;
      const double wxx = dx ? wx : 1.0 - wx;
      acc += wyy * wxx * img.at(c, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
    }
  }
  return static_cast<float>(acc);
}

// Bilinear sample with coordinates clamped to the image (border replication).
float sample_clamp(const ImageBuffer& img, std::size_t c, double x, double y) {
  x = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
  y = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
  const auto x0 = static_cast<std::size_t>(std::floor(x));
  const auto y0 = static_cast<std::size_t>(std::floor(y));
  const std::size_t x1 = std::min(x0 + 1, img.width - 1);
  const std::size_t y1 = std::min(y0 + 1, img.height - 1);
  const double wx = x - static_cast<double>(x0);
  const double wy = y - static_cast<double>(y0);
  const double top = (1.0 - wx) * img.at(c, y0, x0) + wx * img.at(c, y0, x1);
  const double bot = (1.0 - wx) * img.at(c, y1, x0) + wx * img.at(c, y1, x1);
  return static_cast<float>((1.0 - wy) * top + wy * bot);
}

template <typename Map>
ImageBuffer remap_zero(const ImageBuffer& img, Map&& map) {
  ImageBuffer out(img.width, img.height);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      const Point2 s = map(static_cast<double>(x), static_cast<double>(y));
      for (std::size_t c = 0; c < ImageBuffer::kChannels; ++c) out.at(c, y, x) = sample_zero(img, c, s.x, s.y);
    }
  }
  return out;
}

double luminance(const ImageBuffer& img, std::size_t y, std::size_t x) {
  return 0.299 * img.at(0, y, x) + 0.587 * img.at(1, y, x) + 0.114 * img.at(2, y, x);
}

void require_nonempty(const ImageBuffer& img, const char* op) {
  if (img.empty() || img.data.size() != ImageBuffer::kChannels * img.plane()) {
    throw ContractError(std::string(op) + ": empty or malformed image");
  }
}

// Solves the 8-parameter homography h with h(src[i]) = dst[i].
std::array<double, 9> solve_homography(const std::array<Point2, 4>& src, const std::array<Point2, 4>& dst) {
  double a[8][9] = {};
  for (int i = 0; i < 4; ++i) {
    const double u = src[i].x;
    const double v = src[i].y;
    const double x = dst[i].x;
    const double y = dst[i].y;
    double* r0 = a[2 * i];
    double* r1 = a[2 * i + 1];
    r0[0] = u, r0[1] = v, r0[2] = 1, r0[6] = -u * x, r0[7] = -v * x, r0[8] = x;
    r1[3] = u, r1[4] = v, r1[5] = 1, r1[6] = -u * y, r1[7] = -v * y, r1[8] = y;
  }
  for (int col = 0; col < 8; ++col) {
    int piv = col;
    for (int r = col + 1; r < 8; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    }
    if (std::abs(a[piv][col]) < 1e-12) throw NumericError("perspective: degenerate corner configuration");
    if (piv != col) std::swap(a[piv], a[col]);
    for (int r = 0; r < 8; ++r) {
      if (r == col) continue;
      const double f = a[r][col] / a[col][col];
      for (int k = col; k < 9; ++k) a[r][k] -= f * a[col][k];
    }
  }
  std::array<double, 9> h{};
  for (int i = 0; i < 8; ++i) h[static_cast<std::size_t>(i)] = a[i][8] / a[i][i];
  h[8] = 1.0;
  return h;
}

std::vector<double> gaussian_kernel(double sigma) {
  const auto radius = static_cast<long>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (long i = -radius; i <= radius; ++i) {
    const double v = std::exp(-static_cast<double>(i * i) / (2.0 * sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = v;
    total += v;
  }
  for (auto& v : k) v /= total;
  return k;
}

// Separable convolution with replicated borders.
std::vector<double> smooth(const std::vector<double>& in, std::size_t w, std::size_t h, const std::vector<double>& k) {
  const auto radius = static_cast<long>(k.size() / 2);
  const auto wl = static_cast<long>(w);
  const auto hl = static_cast<long>(h);
  std::vector<double> tmp(in.size());
  for (long y = 0; y < hl; ++y) {
    for (long x = 0; x < wl; ++x) {
      double acc = 0.0;
      for (long i = -radius; i <= radius; ++i) {
        const long xx = std::clamp(x + i, 0L, wl - 1);
        acc += k[static_cast<std::size_t>(i + radius)] * in[static_cast<std::size_t>(y * wl + xx)];
      }
      tmp[static_cast<std::size_t>(y * wl + x)] = acc;
    }
  }
  std::vector<double> out(in.size());
  for (long y = 0; y < hl; ++y) {
    for (long x = 0; x < wl; ++x) {
      double acc = 0.0;
      for (long i = -radius; i <= radius; ++i) {
        const long yy = std::clamp(y + i, 0L, hl - 1);
        acc += k[static_cast<std::size_t>(i + radius)] * tmp[static_cast<std::size_t>(yy * wl + x)];
      }
      out[static_cast<std::size_t>(y * wl + x)] = acc;
    }
  }
  return out;
}

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double d = mx - mn;
  v = mx;
  s = mx > 0.0 ? d / mx : 0.0;
  if (d <= 0.0) {
    h = 0.0;
    return;
  }
  if (mx == r) {
    h = (g - b) / d;
  } else if (mx == g) {
    h = 2.0 + (b - r) / d;
  } else {
    h = 4.0 + (r - g) / d;
  }
  h /= 6.0;
  if (h < 0.0) h += 1.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  const double h6 = h * 6.0;
  const double i = std::floor(h6);
  const double f = h6 - i;
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  switch (static_cast<int>(i) % 6) {
    case 0: r = v, g = t, b = p; break;
    case 1: r = q, g = v, b = p; break;
    case 2: r = p, g = v, b = t; break;
    case 3: r = p, g = q, b = v; break;
    case 4: r = t, g = p, b = v; break;
    default: r = v, g = p, b = q; break;
  }
}

}  // namespace

// ---------------------------------------------------------------------------

AugmentSpec AugmentSpec::stage1(std::size_t resize_to) {
  AugmentSpec s;
  s.resize_to = resize_to;
  return s;
}

AugmentSpec AugmentSpec::stage2(std::size_t resize_to) {
  AugmentSpec s = stage1(resize_to);
  s.color_jitter = ColorJitterSpec{};
  s.perspective = PerspectiveSpec{};
  s.elastic = ElasticSpec{};
  return s;
}

void AugmentSpec::validate() const {
  auto prob = [](double p, const char* what) {
    if (!(p >= 0.0 && p <= 1.0)) throw ContractError(std::string(what) + " must be a probability in [0,1]");
  };
  if (resize_to == 0) throw ContractError("resize_to must be at least 1");
  prob(hflip_p, "hflip_p");
  if (!(rotation_max_deg >= 0.0)) throw ContractError("rotation_max_deg must be non-negative");
  if (color_jitter) {
    const auto& j = *color_jitter;
    if (!(j.brightness >= 0 && j.contrast >= 0 && j.saturation >= 0 && j.hue >= 0)) {
      throw ContractError("color jitter deltas must be non-negative");
    }
    if (j.hue > 0.5) throw ContractError("hue delta must be at most 0.5");
  }
  if (perspective) {
    prob(perspective->p, "perspective.p");
    if (!(perspective->distortion_scale >= 0.0 && perspective->distortion_scale <= 1.0)) {
      throw ContractError("perspective.distortion_scale must be in [0,1]");
    }
  }
  if (elastic) {
    if (!(elastic->sigma > 0.0)) throw ContractError("elastic.sigma must be positive");
    if (!(elastic->alpha >= 0.0)) throw ContractError("elastic.alpha must be non-negative");
  }
  for (float s : normalize_std) {
    if (!(s > 0.0f)) throw ContractError("normalize std components must be positive");
  }
}

ImageBuffer resize_bilinear(const ImageBuffer& img, std::size_t target) {
  require_nonempty(img, "resize_bilinear");
  if (target == 0) throw ContractError("resize_bilinear: target must be at least 1");
  if (img.width == target && img.height == target) return img;
  ImageBuffer out(target, target);
  const double sx = static_cast<double>(img.width) / static_cast<double>(target);
  const double sy = static_cast<double>(img.height) / static_cast<double>(target);
  for (std::size_t y = 0; y < target; ++y) {
    const double fy = std::max(0.0, (static_cast<double>(y) + 0.5) * sy - 0.5);
    const auto y0 = std::min(static_cast<std::size_t>(fy), img.height - 1);
    const std::size_t y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < target; ++x) {
      const double fx = std::max(0.0, (static_cast<double>(x) + 0.5) * sx - 0.5);
      const auto x0 = std::min(static_cast<std::size_t>(fx), img.width - 1);
      const std::size_t x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < ImageBuffer::kChannels; ++c) {
        const double top = (1.0 - wx) * img.at(c, y0, x0) + wx * img.at(c, y0, x1);
        const double bot = (1.0 - wx) * img.at(c, y1, x0) + wx * img.at(c, y1, x1);
        out.at(c, y, x) = static_cast<float>((1.0 - wy) * top + wy * bot);
      }
    }
  }
  return out;
}

ImageBuffer hflip(const ImageBuffer& img) {
  ImageBuffer out = img;
  for (std::size_t c = 0; c < ImageBuffer::kChannels; ++c) {
    for (std::size_t y = 0; y < img.height; ++y) {
      for (std::size_t x = 0; x < img.width; ++x) out.at(c, y, x) = img.at(c, y, img.width - 1 - x);
    }
  }
  return out;
}

ImageBuffer random_hflip(const ImageBuffer& img, double p, RngStream& rng) {
  return rng.uniform() < p ? hflip(img) : img;
}

ImageBuffer rotate(const ImageBuffer& img, double degrees) {
  require_nonempty(img, "rotate");
  if (degrees == 0.0) return img;
  const double th = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(th);
  const double sn = std::sin(th);
  const double cx = (static_cast<double>(img.width) - 1.0) / 2.0;
  const double cy = (static_cast<double>(img.height) - 1.0) / 2.0;
  return remap_zero(img, [&](double x, double y) {
    const double dx = x - cx;
    const double dy = y - cy;
    return Point2{cx + cs * dx - sn * dy, cy + sn * dx + cs * dy};
  });
}

ImageBuffer random_rotation(const ImageBuffer& img, double max_deg, RngStream& rng) {
  if (max_deg == 0.0) return img;
  return rotate(img, rng.uniform(-max_deg, max_deg));
}

ImageBuffer adjust_brightness(const ImageBuffer& img, double factor) {
  ImageBuffer out = img;
  for (auto& v : out.data) v = clamp01(v * factor);
  return out;
}

ImageBuffer adjust_contrast(const ImageBuffer& img, double factor) {
  double mean = 0.0;
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) mean += luminance(img, y, x);
  }
  mean /= static_cast<double>(img.plane());
  ImageBuffer out = img;
  for (auto& v : out.data) v = clamp01(factor * v + (1.0 - factor) * mean);
  return out;
}

ImageBuffer adjust_saturation(const ImageBuffer& img, double factor) {
  ImageBuffer out = img;
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      const double gray = luminance(img, y, x);
      for (std::size_t c = 0; c < ImageBuffer::kChannels; ++c) {
        out.at(c, y, x) = clamp01(factor * img.at(c, y, x) + (1.0 - factor) * gray);
      }
    }
  }
  return out;
}

ImageBuffer adjust_hue(const ImageBuffer& img, double offset) {
  ImageBuffer out = img;
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      double h = 0.0;
      double s = 0.0;
      double v = 0.0;
      rgb_to_hsv(img.at(0, y, x), img.at(1, y, x), img.at(2, y, x), h, s, v);
      h += offset;
      h -= std::floor(h);
      double r = 0.0;
      double g = 0.0;
      double b = 0.0;
      hsv_to_rgb(h, s, v, r, g, b);
      out.at(0, y, x) = clamp01(r);
      out.at(1, y, x) = clamp01(g);
      out.at(2, y, x) = clamp01(b);
    }
  }
  return out;
}

ImageBuffer color_jitter(const ImageBuffer& img, const ColorJitterSpec& spec, RngStream& rng) {
  auto factor = [&](double delta) { return rng.uniform(std::max(0.0, 1.0 - delta), 1.0 + delta); };
  ImageBuffer out = img;
  if (spec.brightness > 0.0) out = adjust_brightness(out, factor(spec.brightness));
  if (spec.contrast > 0.0) out = adjust_contrast(out, factor(spec.contrast));
  if (spec.saturation > 0.0) out = adjust_saturation(out, factor(spec.saturation));
  if (spec.hue > 0.0) out = adjust_hue(out, rng.uniform(-spec.hue, spec.hue));
  return out;
}

PerspectiveParams perspective_params(std::size_t width, std::size_t height, double distortion_scale, RngStream& rng) {
  const double w = static_cast<double>(width) - 1.0;
  const double h = static_cast<double>(height) - 1.0;
  const double mx = distortion_scale * static_cast<double>(width) / 2.0;
  const double my = distortion_scale * static_cast<double>(height) / 2.0;
  PerspectiveParams p;
  p.start = {Point2{0.0, 0.0}, Point2{w, 0.0}, Point2{w, h}, Point2{0.0, h}};
  // Each corner moves inward by an independent uniform amount per axis.
  static constexpr std::array<double, 4> kSx{1.0, -1.0, -1.0, 1.0};
  static constexpr std::array<double, 4> kSy{1.0, 1.0, -1.0, -1.0};
  for (std::size_t i = 0; i < 4; ++i) {
    const double ox = rng.uniform(0.0, mx);
    const double oy = rng.uniform(0.0, my);
    p.end[i] = Point2{p.start[i].x + kSx[i] * ox, p.start[i].y + kSy[i] * oy};
  }
  return p;
}

ImageBuffer warp_perspective(const ImageBuffer& img, const PerspectiveParams& params) {
  require_nonempty(img, "warp_perspective");
  const auto h = solve_homography(params.end, params.start);
  return remap_zero(img, [&](double x, double y) {
    const double den = h[6] * x + h[7] * y + h[8];
    return Point2{(h[0] * x + h[1] * y + h[2]) / den, (h[3] * x + h[4] * y + h[5]) / den};
  });
}

ImageBuffer random_perspective(const ImageBuffer& img, double distortion_scale, double p, RngStream& rng) {
  if (p <= 0.0 || distortion_scale == 0.0) return img;
  if (!(rng.uniform() < p)) return img;
  return warp_perspective(img, perspective_params(img.width, img.height, distortion_scale, rng));
}

DisplacementField elastic_field(std::size_t width, std::size_t height, double alpha, double sigma, RngStream& rng) {
  if (!(sigma > 0.0)) throw ContractError("elastic: sigma must be positive");
  const std::size_t n = width * height;
  std::vector<double> nx(n);
  std::vector<double> ny(n);
  for (auto& v : nx) v = rng.uniform(-1.0, 1.0);
  for (auto& v : ny) v = rng.uniform(-1.0, 1.0);
  const auto k = gaussian_kernel(sigma);
  const auto sx = smooth(nx, width, height, k);
  const auto sy = smooth(ny, width, height, k);
  DisplacementField f{width, height, std::vector<float>(n), std::vector<float>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    f.dx[i] = static_cast<float>(alpha * sx[i]);
    f.dy[i] = static_cast<float>(alpha * sy[i]);
  }
  return f;
}

ImageBuffer warp_displacement(const ImageBuffer& img, const DisplacementField& field) {
  require_nonempty(img, "warp_displacement");
  if (field.width != img.width || field.height != img.height) {
    throw DimensionError("warp_displacement: field size differs from image size");
  }
  ImageBuffer out(img.width, img.height);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      const std::size_t i = y * img.width + x;
      const double sx = static_cast<double>(x) + field.dx[i];
      const double sy = static_cast<double>(y) + field.dy[i];
      for (std::size_t c = 0; c < ImageBuffer::kChannels; ++c) out.at(c, y, x) = sample_clamp(img, c, sx, sy);
    }
  }
  return out;
}

ImageBuffer elastic_transform(const ImageBuffer& img, double alpha, double sigma, RngStream& rng) {
  if (!(sigma > 0.0)) throw ContractError("elastic: sigma must be positive");
  if (alpha == 0.0) return img;
  return warp_displacement(img, elastic_field(img.width, img.height, alpha, sigma, rng));
}

Tensor normalize(const ImageBuffer& img, const std::array<float, 3>& mean, const std::array<float, 3>& std) {
  for (float s : std) {
    if (!(s > 0.0f)) throw ContractError("normalize: std components must be positive");
  }
  Tensor t({ImageBuffer::kChannels, img.height, img.width});
  auto d = t.data();
  const std::size_t plane = img.plane();
  for (std::size_t c = 0; c < ImageBuffer::kChannels; ++c) {
    for (std::size_t i = 0; i < plane; ++i) d[c * plane + i] = (img.data[c * plane + i] - mean[c]) / std[c];
  }
  return t;
}

ImageBuffer denormalize(const Tensor& t, const std::array<float, 3>& mean, const std::array<float, 3>& std) {
  if (t.rank() != 3 || t.dim(0) != 3) throw DimensionError("denormalize: expected [3,H,W]");
  ImageBuffer img(t.dim(2), t.dim(1));
  auto d = t.data();
  const std::size_t plane = img.plane();
  for (std::size_t c = 0; c < ImageBuffer::kChannels; ++c) {
    for (std::size_t i = 0; i < plane; ++i) img.data[c * plane + i] = d[c * plane + i] * std[c] + mean[c];
  }
  return img;
}

// ---------------------------------------------------------------------------

std::string_view step_name(StepKind kind) {
  switch (kind) {
    case StepKind::Resize: return "resize";
    case StepKind::HorizontalFlip: return "hflip";
    case StepKind::Rotation: return "rotation";
    case StepKind::ColorJitter: return "color_jitter";
    case StepKind::Perspective: return "perspective";
    case StepKind::Elastic: return "elastic";
    case StepKind::Normalize: return "normalize";
  }
  return "unknown";
}

Pipeline::Pipeline(AugmentSpec spec, std::vector<StepKind> steps) : spec_(std::move(spec)), steps_(std::move(steps)) {
  spec_.validate();
  if (steps_.empty() || steps_.back() != StepKind::Normalize) {
    throw ContractError("pipeline must end with normalize");
  }
  for (std::size_t i = 0; i + 1 < steps_.size(); ++i) {
    if (steps_[i] == StepKind::Normalize) throw ContractError("normalize must be the last step");
  }
  auto has = [&](StepKind k) { return std::find(steps_.begin(), steps_.end(), k) != steps_.end(); };
  if ((has(StepKind::ColorJitter) && !spec_.color_jitter) || (has(StepKind::Perspective) && !spec_.perspective) ||
      (has(StepKind::Elastic) && !spec_.elastic)) {
    throw ContractError("pipeline step has no parameters in the augment spec");
  }
}

bool Pipeline::is_random() const {
  for (auto k : steps_) {
    switch (k) {
      case StepKind::HorizontalFlip:
        if (spec_.hflip_p > 0.0) return true;
        break;
      case StepKind::Rotation:
        if (spec_.rotation_max_deg > 0.0) return true;
        break;
      case StepKind::ColorJitter: {
        const auto& j = *spec_.color_jitter;
        if (j.brightness > 0 || j.contrast > 0 || j.saturation > 0 || j.hue > 0) return true;
        break;
      }
      case StepKind::Perspective:
        if (spec_.perspective->p > 0 && spec_.perspective->distortion_scale > 0) return true;
        break;
      case StepKind::Elastic:
        if (spec_.elastic->alpha > 0) return true;
        break;
      default: break;
    }
  }
  return false;
}

ImageBuffer Pipeline::augment(const ImageBuffer& img, RngStream& rng, const StepObserver& observer) const {
  ImageBuffer cur = img;
  for (std::size_t i = 0; i < steps_.size(); ++i) {
    switch (steps_[i]) {
      case StepKind::Resize: cur = resize_bilinear(cur, spec_.resize_to); break;
      case StepKind::HorizontalFlip: cur = random_hflip(cur, spec_.hflip_p, rng); break;
      case StepKind::Rotation: cur = random_rotation(cur, spec_.rotation_max_deg, rng); break;
      case StepKind::ColorJitter: cur = color_jitter(cur, *spec_.color_jitter, rng); break;
      case StepKind::Perspective:
        cur = random_perspective(cur, spec_.perspective->distortion_scale, spec_.perspective->p, rng);
        break;
      case StepKind::Elastic: cur = elastic_transform(cur, spec_.elastic->alpha, spec_.elastic->sigma, rng); break;
      case StepKind::Normalize: return cur;
    }
    if (observer) observer(i, steps_[i], cur);
  }
  return cur;
}

Tensor Pipeline::apply(const ImageBuffer& img, RngStream& rng, const StepObserver& observer) const {
  return normalize(augment(img, rng, observer), spec_.normalize_mean, spec_.normalize_std);
}

Pipeline build_stage1_pipeline(const AugmentSpec& spec) {
  return Pipeline(spec, {StepKind::Resize, StepKind::HorizontalFlip, StepKind::Rotation, StepKind::Normalize});
}

Pipeline build_stage2_pipeline(const AugmentSpec& spec) {
  return Pipeline(spec, {StepKind::Resize, StepKind::HorizontalFlip, StepKind::Rotation, StepKind::ColorJitter,
                         StepKind::Perspective, StepKind::Elastic, StepKind::Normalize});
}

Pipeline build_eval_pipeline(const AugmentSpec& spec) {
  return Pipeline(spec, {StepKind::Resize, StepKind::Normalize});
}

Pipeline build_perturbation_pipeline(const AugmentSpec& spec, const PerspectiveSpec& perspective,
                                     const ElasticSpec& elastic) {
  AugmentSpec s = spec;
  s.perspective = PerspectiveSpec{perspective.distortion_scale, 1.0};
  s.elastic = elastic;
  return Pipeline(std::move(s), {StepKind::Resize, StepKind::Perspective, StepKind::Elastic, StepKind::Normalize});
}

}  // namespace deitfake
