#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "deitfake/data.hpp"
#include "deitfake/errors.hpp"

namespace deitfake {
namespace {

SampleManifest counts_manifest(std::size_t fake, std::size_t real) {
  SampleManifest m;
  m.records.reserve(fake + real);
  for (std::size_t i = 0; i < fake + real; ++i) {
    const Label l = i < fake ? Label::Fake : Label::Real;
    m.records.push_back({"img_" + std::to_string(i) + ".png", l, Origin::Original, i});
  }
  return m;
}

TEST(ManifestTest, TwoRowsOneEach) {
  std::istringstream in("a.png\tfake\nb.png\treal\n");
  const SampleManifest m = parse_manifest(in);
  EXPECT_EQ(m.class_counts(), (ClassCounts{1, 1}));
  EXPECT_EQ(m.records[0].image_ref, "a.png");
  EXPECT_EQ(m.records[1].label, Label::Real);
}

TEST(ManifestTest, EmptyIsValid) {
  std::istringstream in("");
  EXPECT_TRUE(parse_manifest(in).empty());
  std::istringstream comments("# header only\n\n");
  EXPECT_TRUE(parse_manifest(comments).empty());
}

TEST(ManifestTest, UnknownLabelIsValidationError) {
  std::istringstream in("a.png\t2\n");
  EXPECT_THROW(parse_manifest(in), ValidationError);
}

TEST(ManifestTest, MalformedRowNamesLine) {
  std::istringstream in("a.png\tfake\n\nno-tab-here\n");
  try {
    parse_manifest(in);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("3"), std::string::npos) << e.what();
  }
}

TEST(ManifestTest, WriteParseRoundTrip) {
  SampleManifest m = counts_manifest(3, 2);
  m.records[4].origin = Origin::Duplicate;
  std::ostringstream out;
  write_manifest(out, m);
  std::istringstream in(out.str());
  const SampleManifest back = parse_manifest(in);
  ASSERT_EQ(back.size(), m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    EXPECT_EQ(back.records[i].image_ref, m.records[i].image_ref);
    EXPECT_EQ(back.records[i].label, m.records[i].label);
    EXPECT_EQ(back.records[i].origin, m.records[i].origin);
  }
}

TEST(ManifestTest, LoadChecksPathsExist) {
  const auto dir = std::filesystem::temp_directory_path() / "deitfake_manifest_test";
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "present.png") << "x";
  std::ofstream(dir / "ok.tsv") << "present.png\treal\n";
  std::ofstream(dir / "bad.tsv") << "present.png\treal\nmissing.png\tfake\n";
  const SampleManifest ok = load_manifest(dir / "ok.tsv");
  EXPECT_EQ(ok.size(), 1u);
  EXPECT_EQ(ok.base_dir, dir);
  EXPECT_THROW(load_manifest(dir / "bad.tsv"), ValidationError);
  std::filesystem::remove_all(dir);
}

TEST(OversampleTest, FullScaleCounts) {
  RngStream rng(1);
  const SampleManifest out = oversample_balance(counts_manifest(95201, 94134), rng);
  EXPECT_EQ(out.class_counts(), (ClassCounts{95201, 95201}));
  EXPECT_EQ(out.size(), 190402u);
}

TEST(OversampleTest, BalancedIsUnchanged) {
  const SampleManifest in = counts_manifest(10, 10);
  RngStream rng(2);
  EXPECT_EQ(oversample_balance(in, rng).records, in.records);
}

TEST(OversampleTest, DuplicatesComeFromMinority) {
  const SampleManifest in = counts_manifest(5, 2);
  RngStream rng(3);
  const SampleManifest out = oversample_balance(in, rng);
  EXPECT_EQ(out.class_counts(), (ClassCounts{5, 5}));
  ASSERT_EQ(out.size(), 10u);
  for (std::size_t i = 0; i < 7; ++i) EXPECT_EQ(out.records[i], in.records[i]);
  for (std::size_t i = 7; i < 10; ++i) {
    const auto& r = out.records[i];
    EXPECT_EQ(r.origin, Origin::Duplicate);
    EXPECT_EQ(r.label, Label::Real);
    EXPECT_TRUE(r.image_ref == "img_5.png" || r.image_ref == "img_6.png") << r.image_ref;
  }
}

TEST(OversampleTest, EmptyClassIsContractError) {
  RngStream rng(4);
  EXPECT_THROW(oversample_balance(counts_manifest(3, 0), rng), ContractError);
}

TEST(SplitTest, FullScaleCounts) {
  RngStream rng(5);
  const SampleManifest balanced = oversample_balance(counts_manifest(95201, 94134), rng);
  const SplitResult split = stratified_split(balanced, 0.9, rng);
  EXPECT_EQ(split.train.size(), 171361u);
  EXPECT_EQ(split.test.size(), 19041u);
}

TEST(SplitTest, HundredPerClass) {
  RngStream rng(6);
  const SplitResult split = stratified_split(counts_manifest(100, 100), 0.9, rng);
  EXPECT_EQ(split.train.class_counts(), (ClassCounts{90, 90}));
  EXPECT_EQ(split.test.class_counts(), (ClassCounts{10, 10}));
  EXPECT_TRUE(split.warnings.empty());
}

TEST(SplitTest, RandomManifestsStayWithinOneSamplePerClass) {
  RngStream gen(7);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t fake = 1 + gen.below(300);
    const std::size_t real = 1 + gen.below(300);
    const double fraction = 0.05 + 0.9 * gen.uniform();
    RngStream rng(1000 + trial);
    const SplitResult split = stratified_split(counts_manifest(fake, real), fraction, rng);
    ASSERT_EQ(split.train.size() + split.test.size(), fake + real);
    for (Label l : {Label::Fake, Label::Real}) {
      const double ideal = static_cast<double>(l == Label::Fake ? fake : real) * fraction;
      EXPECT_LE(std::abs(static_cast<double>(split.train.class_counts().of(l)) - ideal), 1.0)
          << "trial " << trial << " fake " << fake << " real " << real << " fraction " << fraction;
    }
    // Partition: every id lands in exactly one output.
    std::set<std::uint64_t> ids;
    for (const auto& r : split.train.records) ids.insert(r.id);
    for (const auto& r : split.test.records) ids.insert(r.id);
    ASSERT_EQ(ids.size(), fake + real);
  }
}

TEST(SplitTest, TinyClassWarns) {
  RngStream rng(8);
  const SplitResult split = stratified_split(counts_manifest(1, 50), 0.9, rng);
  EXPECT_FALSE(split.warnings.empty());
}

TEST(SplitTest, SameSeedSameSplit) {
  const SampleManifest m = counts_manifest(40, 33);
  RngStream a(9);
  RngStream b(9);
  EXPECT_EQ(stratified_split(m, 0.8, a).train.records, stratified_split(m, 0.8, b).train.records);
}

TEST(BatchTest, ShortFinalBatch) {
  const auto batches = epoch_batches(10, 4, false, 0, 0);
  ASSERT_EQ(batches.size(), 3u);
  EXPECT_EQ(batches[0].size(), 4u);
  EXPECT_EQ(batches[1].size(), 4u);
  EXPECT_EQ(batches[2].size(), 2u);
}

TEST(BatchTest, NoShuffleKeepsOrder) {
  std::size_t expect = 0;
  for (const auto& b : epoch_batches(10, 3, false, 11, 5)) {
    for (std::size_t i : b) EXPECT_EQ(i, expect++);
  }
}

TEST(BatchTest, PermutationDependsOnSeedAndEpoch) {
  auto flat = [](const std::vector<std::vector<std::size_t>>& batches) {
    std::vector<std::size_t> out;
    for (const auto& b : batches) out.insert(out.end(), b.begin(), b.end());
    return out;
  };
  const auto e0 = flat(epoch_batches(50, 8, true, 12, 0));
  const auto e1 = flat(epoch_batches(50, 8, true, 12, 1));
  EXPECT_EQ(e0, flat(epoch_batches(50, 8, true, 12, 0)));
  EXPECT_NE(e0, e1);
  std::vector<std::size_t> sorted = e0;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(sorted[i], i);
}

TEST(SyntheticTest, ManifestAndRendering) {
  SyntheticSpec spec;
  spec.fake_count = 3;
  spec.real_count = 2;
  spec.image_size = 24;
  const SampleManifest m = synthetic_manifest(spec);
  EXPECT_EQ(m.class_counts(), (ClassCounts{3, 2}));
  EXPECT_EQ(m.records[0].image_ref, synthetic_ref(Label::Fake, 0));
  ImageSource source(spec);
  const ImageBuffer& img = source.load(m, m.records[0]);
  EXPECT_EQ(img.width, 24u);
  for (float v : img.data) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
  EXPECT_EQ(render_synthetic(spec, Label::Fake, 0), img);
  EXPECT_NE(render_synthetic(spec, Label::Fake, 0), render_synthetic(spec, Label::Fake, 1));
  EXPECT_NE(render_synthetic(spec, Label::Fake, 0), render_synthetic(spec, Label::Real, 0));
}

TEST(SyntheticTest, FakesAreBrighterInsideTheFaceOnAverage) {
  SyntheticSpec spec;
  spec.image_size = 32;
  double fake = 0.0;
  double real = 0.0;
  for (std::size_t i = 0; i < 40; ++i) {
    for (float v : render_synthetic(spec, Label::Fake, i).data) fake += v;
    for (float v : render_synthetic(spec, Label::Real, i).data) real += v;
  }
  EXPECT_GT(fake, real);
}

TEST(SyntheticTest, SourceWithoutSpecRejectsSyntheticRefs) {
  ImageSource source;
  EXPECT_ANY_THROW(source.load(std::filesystem::path("."), synthetic_ref(Label::Real, 0)));
}

}  // namespace
}  // namespace deitfake
