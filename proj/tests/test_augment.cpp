#include <gtest/gtest.h>

#include <cmath>

#include "deitfake/augment.hpp"
#include "deitfake/errors.hpp"

namespace deitfake {
namespace {

ImageBuffer random_image(std::size_t w, std::size_t h, std::uint64_t seed) {
  RngStream rng(seed);
  ImageBuffer img(w, h);
  for (float& v : img.data) v = static_cast<float>(rng.uniform());
  return img;
}

// Low-frequency image, so bilinear resampling loses little.
ImageBuffer smooth_image(std::size_t n) {
  ImageBuffer img(n, n);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) {
        const double u = static_cast<double>(x) / n;
        const double v = static_cast<double>(y) / n;
        img.at(c, y, x) = static_cast<float>(0.5 + 0.4 * std::sin(2.0 * u + c) * std::cos(1.5 * v));
      }
  return img;
}

void expect_in_unit_range(const ImageBuffer& img) {
  for (float v : img.data) {
    ASSERT_GE(v, 0.0f);
    ASSERT_LE(v, 1.0f);
  }
}

TEST(ResizeTest, SameSizeIsBitwiseIdentity) {
  const ImageBuffer img = random_image(224, 224, 1);
  EXPECT_EQ(resize_bilinear(img, 224), img);
}

TEST(ResizeTest, ConstantStaysConstant) {
  ImageBuffer img(13, 7, 0.375f);
  for (std::size_t target : {1u, 5u, 32u, 61u}) {
    const ImageBuffer out = resize_bilinear(img, target);
    ASSERT_EQ(out.width, target);
    ASSERT_EQ(out.height, target);
    for (float v : out.data) EXPECT_FLOAT_EQ(v, 0.375f);
  }
}

TEST(ResizeTest, CheckerboardHalfPixelOracle) {
  ImageBuffer img(2, 2);
  for (std::size_t c = 0; c < 3; ++c) {
    img.at(c, 0, 0) = 1.0f;
    img.at(c, 1, 1) = 1.0f;
  }
  const ImageBuffer out = resize_bilinear(img, 4);
  // Output centre (x + 0.5) / 2 - 0.5 maps pixels 1 and 2 to source
  // coordinates 0.25 and 0.75, clamped to the edge outside [0, 1].
  auto oracle = [](double sx, double sy) {
    sx = std::clamp(sx, 0.0, 1.0);
    sy = std::clamp(sy, 0.0, 1.0);
    return (1 - sx) * (1 - sy) * 1.0 + sx * sy * 1.0;
  };
  for (std::size_t y = 0; y < 4; ++y) {
    for (std::size_t x = 0; x < 4; ++x) {
      const double expect = oracle((x + 0.5) / 2.0 - 0.5, (y + 0.5) / 2.0 - 0.5);
      EXPECT_NEAR(out.at(0, y, x), expect, 1e-6) << x << "," << y;
    }
  }
  EXPECT_NEAR(out.at(1, 1, 1), 0.625, 1e-6);
  EXPECT_NEAR(out.at(1, 1, 2), 0.375, 1e-6);
}

TEST(ResizeTest, EmptyInputIsContractError) {
  EXPECT_THROW(resize_bilinear(ImageBuffer(), 4), ContractError);
}

TEST(FlipTest, ZeroProbabilityIsIdentity) {
  const ImageBuffer img = random_image(9, 5, 2);
  for (std::uint64_t s = 0; s < 100; ++s) {
    RngStream rng(s);
    EXPECT_EQ(random_hflip(img, 0.0, rng), img);
  }
}

TEST(FlipTest, Involution) {
  const ImageBuffer img = random_image(9, 5, 3);
  RngStream rng(4);
  EXPECT_EQ(random_hflip(random_hflip(img, 1.0, rng), 1.0, rng), img);
  EXPECT_EQ(hflip(img).at(1, 2, 0), img.at(1, 2, 8));
}

TEST(FlipTest, FrequencyMatchesProbability) {
  ImageBuffer img(2, 1);
  img.at(0, 0, 0) = 1.0f;
  std::size_t flips = 0;
  for (std::uint64_t s = 0; s < 10000; ++s) {
    RngStream rng = RngStream::for_sample(5, 0, s);
    if (random_hflip(img, 0.5, rng).at(0, 0, 1) == 1.0f) ++flips;
  }
  EXPECT_GE(flips, 4700u);
  EXPECT_LE(flips, 5300u);
}

TEST(RotationTest, ZeroDegreesIsIdentity) {
  const ImageBuffer img = random_image(16, 16, 6);
  for (std::uint64_t s = 0; s < 100; ++s) {
    RngStream rng(s);
    EXPECT_EQ(random_rotation(img, 0.0, rng), img);
  }
  EXPECT_EQ(rotate(img, 0.0), img);
}

TEST(RotationTest, CentrePixelIsFixed) {
  const ImageBuffer img = random_image(15, 15, 7);
  for (double deg : {-15.0, -3.3, 7.0, 12.5, 90.0}) {
    const ImageBuffer out = rotate(img, deg);
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(out.at(c, 7, 7), img.at(c, 7, 7), 1e-6) << deg;
  }
}

TEST(RotationTest, RoundTripInteriorError) {
  const ImageBuffer img = smooth_image(32);
  const ImageBuffer back = rotate(rotate(img, 10.0), -10.0);
  double err = 0.0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 2; y < 30; ++y)
      for (std::size_t x = 2; x < 30; ++x) {
        err += std::abs(back.at(c, y, x) - img.at(c, y, x));
        ++n;
      }
  EXPECT_LT(err / n, 0.05);
}

TEST(RotationTest, DrawnAngleWithinRange) {
  // A single bright pixel off-centre moves along an arc of at most 15 degrees.
  ImageBuffer img(31, 31);
  for (std::size_t c = 0; c < 3; ++c) img.at(c, 15, 25) = 1.0f;
  for (std::uint64_t s = 0; s < 200; ++s) {
    RngStream rng(s);
    const ImageBuffer out = random_rotation(img, 15.0, rng);
    double wx = 0.0;
    double wy = 0.0;
    double mass = 0.0;
    for (std::size_t y = 0; y < 31; ++y)
      for (std::size_t x = 0; x < 31; ++x) {
        mass += out.at(0, y, x);
        wx += out.at(0, y, x) * (static_cast<double>(x) - 15.0);
        wy += out.at(0, y, x) * (static_cast<double>(y) - 15.0);
      }
    ASSERT_GT(mass, 0.0);
    const double angle = std::abs(std::atan2(wy, wx)) * 180.0 / M_PI;
    EXPECT_LE(angle, 15.0 + 1.0);
  }
}

TEST(RotationTest, CommutesWithFlipUpToMirroredAngle) {
  const ImageBuffer img = smooth_image(17);
  for (double deg : {4.0, -11.0, 15.0}) {
    const ImageBuffer a = hflip(rotate(img, deg));
    const ImageBuffer b = rotate(hflip(img), -deg);
    for (std::size_t i = 0; i < a.data.size(); ++i) ASSERT_NEAR(a.data[i], b.data[i], 1e-5);
  }
}

TEST(ColorJitterTest, ZeroDeltasAreIdentity) {
  const ImageBuffer img = random_image(8, 8, 8);
  RngStream rng(9);
  const ImageBuffer out = color_jitter(img, ColorJitterSpec{0.0, 0.0, 0.0, 0.0}, rng);
  for (std::size_t i = 0; i < img.data.size(); ++i) EXPECT_NEAR(out.data[i], img.data[i], 1e-6);
}

TEST(ColorJitterTest, GrayIgnoresSaturation) {
  const ImageBuffer gray(6, 6, 0.42f);
  for (std::uint64_t s = 0; s < 50; ++s) {
    RngStream rng(s);
    const ImageBuffer out = color_jitter(gray, ColorJitterSpec{0.0, 0.0, 0.2, 0.0}, rng);
    for (float v : out.data) EXPECT_NEAR(v, 0.42f, 1e-6);
  }
}

TEST(ColorJitterTest, BrightnessClampsAtOne) {
  const ImageBuffer out = adjust_brightness(ImageBuffer(2, 2, 0.9f), 1.2);
  for (float v : out.data) EXPECT_EQ(v, 1.0f);
  const ImageBuffer mid = adjust_brightness(ImageBuffer(2, 2, 0.5f), 1.2);
  EXPECT_NEAR(mid.data[0], 0.6f, 1e-6);
}

TEST(ColorJitterTest, HueFullTurnIsIdentity) {
  const ImageBuffer img = random_image(5, 5, 10);
  const ImageBuffer out = adjust_hue(img, 1.0);
  for (std::size_t i = 0; i < img.data.size(); ++i) EXPECT_NEAR(out.data[i], img.data[i], 1e-5);
}

TEST(ColorJitterTest, StaysInUnitRange) {
  const ImageBuffer img = random_image(8, 8, 11);
  for (std::uint64_t s = 0; s < 100; ++s) {
    RngStream rng(s);
    expect_in_unit_range(color_jitter(img, ColorJitterSpec{0.5, 0.5, 0.5, 0.5}, rng));
  }
}

TEST(PerspectiveTest, IdentityCases) {
  const ImageBuffer img = random_image(16, 16, 12);
  for (std::uint64_t s = 0; s < 100; ++s) {
    RngStream a(s);
    EXPECT_EQ(random_perspective(img, 0.0, 1.0, a), img);
    RngStream b(s);
    EXPECT_EQ(random_perspective(img, 0.2, 0.0, b), img);
  }
  PerspectiveParams same;
  same.start = {Point2{0, 0}, Point2{15, 0}, Point2{15, 15}, Point2{0, 15}};
  same.end = same.start;
  const ImageBuffer out = warp_perspective(img, same);
  for (std::size_t i = 0; i < img.data.size(); ++i) EXPECT_NEAR(out.data[i], img.data[i], 1e-5);
}

TEST(PerspectiveTest, CornerDisplacementBound) {
  for (std::size_t w : {32u, 224u}) {
    const double bound = 0.2 * static_cast<double>(w) / 2.0;
    for (std::uint64_t s = 0; s < 1000; ++s) {
      RngStream rng(s);
      const PerspectiveParams p = perspective_params(w, w, 0.2, rng);
      for (std::size_t i = 0; i < 4; ++i) {
        ASSERT_LE(std::abs(p.end[i].x - p.start[i].x), bound);
        ASSERT_LE(std::abs(p.end[i].y - p.start[i].y), bound);
      }
    }
  }
}

TEST(PerspectiveTest, CornersLandWhereTheyShould) {
  // One bright pixel at the top-left start corner appears at the end corner.
  ImageBuffer img(32, 32);
  for (std::size_t c = 0; c < 3; ++c) img.at(c, 0, 0) = 1.0f;
  RngStream rng(13);
  PerspectiveParams p = perspective_params(32, 32, 0.2, rng);
  p.end[0] = Point2{std::round(p.end[0].x), std::round(p.end[0].y)};
  const ImageBuffer out = warp_perspective(img, p);
  EXPECT_NEAR(out.at(0, static_cast<std::size_t>(p.end[0].y), static_cast<std::size_t>(p.end[0].x)), 1.0f, 1e-4);
}

TEST(ElasticTest, IdentityCases) {
  const ImageBuffer img = random_image(16, 16, 14);
  RngStream rng(15);
  EXPECT_EQ(elastic_transform(img, 0.0, 5.0, rng), img);
  const ImageBuffer flat(16, 16, 0.3f);
  for (std::uint64_t s = 0; s < 20; ++s) {
    RngStream r(s);
    const ImageBuffer out = elastic_transform(flat, 50.0, 5.0, r);
    for (float v : out.data) EXPECT_FLOAT_EQ(v, 0.3f);
  }
  EXPECT_THROW(elastic_transform(img, 1.0, 0.0, rng), ContractError);
}

TEST(ElasticTest, FieldIsBoundedAndSmooth) {
  const double alpha = 50.0;
  const double sigma = 5.0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    RngStream rng(s);
    const DisplacementField f = elastic_field(32, 32, alpha, sigma, rng);
    for (std::size_t y = 0; y < 32; ++y) {
      for (std::size_t x = 0; x < 32; ++x) {
        const std::size_t i = y * 32 + x;
        ASSERT_LE(std::abs(f.dx[i]), alpha);
        ASSERT_LE(std::abs(f.dy[i]), alpha);
        if (x + 1 < 32) {
          ASSERT_LT(std::abs(f.dx[i + 1] - f.dx[i]), alpha / sigma);
          ASSERT_LT(std::abs(f.dy[i + 1] - f.dy[i]), alpha / sigma);
        }
        if (y + 1 < 32) {
          ASSERT_LT(std::abs(f.dx[i + 32] - f.dx[i]), alpha / sigma);
          ASSERT_LT(std::abs(f.dy[i + 32] - f.dy[i]), alpha / sigma);
        }
      }
    }
  }
}

TEST(ElasticTest, ZeroFieldWarpIsIdentity) {
  const ImageBuffer img = random_image(10, 6, 16);
  const DisplacementField zero{10, 6, std::vector<float>(60), std::vector<float>(60)};
  EXPECT_EQ(warp_displacement(img, zero), img);
}

TEST(NormalizeTest, MeanPixelMapsToZero) {
  ImageBuffer img(1, 1);
  img.at(0, 0, 0) = 0.485f;
  img.at(1, 0, 0) = 0.456f;
  img.at(2, 0, 0) = 0.406f;
  const AugmentSpec spec = AugmentSpec::stage1(32);
  const Tensor t = normalize(img, spec.normalize_mean, spec.normalize_std);
  ASSERT_EQ(t.shape(), (Shape{3, 1, 1}));
  for (float v : t.data()) EXPECT_EQ(v, 0.0f);
}

TEST(NormalizeTest, UnitStdZeroMeanIsIdentity) {
  const ImageBuffer img = random_image(4, 3, 17);
  const Tensor t = normalize(img, {0, 0, 0}, {1, 1, 1});
  EXPECT_TRUE(std::equal(img.data.begin(), img.data.end(), t.data().begin()));
}

TEST(NormalizeTest, RoundTrip) {
  const ImageBuffer img = random_image(8, 8, 18);
  const AugmentSpec spec = AugmentSpec::stage1(8);
  const ImageBuffer back = denormalize(normalize(img, spec.normalize_mean, spec.normalize_std), spec.normalize_mean,
                                       spec.normalize_std);
  for (std::size_t i = 0; i < img.data.size(); ++i) EXPECT_NEAR(back.data[i], img.data[i], 1e-6);
}

TEST(NormalizeTest, ZeroStdIsContractError) {
  EXPECT_THROW(normalize(ImageBuffer(2, 2), {0, 0, 0}, {1, 0, 1}), ContractError);
}

TEST(PipelineTest, StageOrders) {
  using K = StepKind;
  EXPECT_EQ(build_stage1_pipeline(AugmentSpec::stage1(32)).steps(),
            (std::vector<K>{K::Resize, K::HorizontalFlip, K::Rotation, K::Normalize}));
  EXPECT_EQ(build_stage2_pipeline(AugmentSpec::stage2(32)).steps(),
            (std::vector<K>{K::Resize, K::HorizontalFlip, K::Rotation, K::ColorJitter, K::Perspective, K::Elastic,
                            K::Normalize}));
  const Pipeline eval = build_eval_pipeline(AugmentSpec::stage2(32));
  EXPECT_EQ(eval.steps(), (std::vector<K>{K::Resize, K::Normalize}));
  EXPECT_FALSE(eval.is_random());
}

TEST(PipelineTest, PublishedDefaults) {
  const AugmentSpec s = AugmentSpec::stage2(224);
  EXPECT_EQ(s.hflip_p, 0.5);
  EXPECT_EQ(s.rotation_max_deg, 15.0);
  ASSERT_TRUE(s.color_jitter && s.perspective && s.elastic);
  EXPECT_EQ(*s.color_jitter, (ColorJitterSpec{0.2, 0.2, 0.2, 0.1}));
  EXPECT_EQ(*s.perspective, (PerspectiveSpec{0.2, 0.5}));
  EXPECT_EQ(s.elastic->alpha, 50.0);
  EXPECT_EQ(s.elastic->sigma, 5.0);
  EXPECT_FALSE(AugmentSpec::stage1(224).elastic.has_value());
}

TEST(PipelineTest, DeterministicPerSeed) {
  const ImageBuffer img = random_image(40, 40, 19);
  const Pipeline p = build_stage2_pipeline(AugmentSpec::stage2(32));
  RngStream a = RngStream::for_sample(1, 2, 3);
  RngStream b = RngStream::for_sample(1, 2, 3);
  RngStream c = RngStream::for_sample(1, 2, 4);
  const Tensor ta = p.apply(img, a);
  const Tensor tb = p.apply(img, b);
  const Tensor tc = p.apply(img, c);
  ASSERT_EQ(ta.shape(), (Shape{3, 32, 32}));
  EXPECT_TRUE(std::equal(ta.data().begin(), ta.data().end(), tb.data().begin()));
  EXPECT_FALSE(std::equal(ta.data().begin(), ta.data().end(), tc.data().begin()));
}

TEST(PipelineTest, ObserverSeesEveryImageStep) {
  const Pipeline p = build_stage2_pipeline(AugmentSpec::stage2(32));
  std::vector<StepKind> seen;
  RngStream rng(20);
  p.augment(random_image(48, 48, 21), rng, [&](std::size_t, StepKind k, const ImageBuffer& im) {
    seen.push_back(k);
    expect_in_unit_range(im);
  });
  EXPECT_EQ(seen.size(), 6u);
}

TEST(AugmentSpecTest, Validation) {
  AugmentSpec s = AugmentSpec::stage2(32);
  EXPECT_NO_THROW(s.validate());
  s.hflip_p = 1.5;
  EXPECT_THROW(s.validate(), ContractError);
  s = AugmentSpec::stage2(32);
  s.elastic->sigma = 0.0;
  EXPECT_THROW(s.validate(), ContractError);
  s = AugmentSpec::stage2(32);
  s.normalize_std[2] = 0.0f;
  EXPECT_THROW(s.validate(), ContractError);
}

}  // namespace
}  // namespace deitfake
