#include "deitfake/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "deitfake/errors.hpp"

namespace deitfake {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

std::uint64_t next_id(const SampleManifest& m) {
  std::uint64_t id = 0;
  for (const auto& r : m.records) id = std::max(id, r.id + 1);
  return id;
}

void shuffle(std::vector<std::size_t>& v, RngStream& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace

ClassCounts SampleManifest::class_counts() const {
  ClassCounts c;
  for (const auto& r : records) (r.label == Label::Fake ? c.fake : c.real) += 1;
  return c;
}

std::vector<Label> SampleManifest::labels() const {
  std::vector<Label> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.label);
  return out;
}

SampleManifest parse_manifest(std::istream& in) {
  SampleManifest m;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto fields = split_tabs(line);
    if (fields.size() < 2 || fields.size() > 3) {
      throw ParseError("expected '<path>\\t<label>[\\t<origin>]'", lineno);
    }
    if (fields[0].empty()) throw ParseError("empty image reference", lineno);
    const auto label = parse_label(fields[1]);
    if (!label) {
      throw ValidationError("line " + std::to_string(lineno) + ": unknown label '" + fields[1] +
                            "' (expected real or fake)");
    }
    Origin origin = Origin::Original;
    if (fields.size() == 3) {
      if (fields[2] == "duplicate") {
        origin = Origin::Duplicate;
      } else if (fields[2] != "original") {
        throw ParseError("unknown origin '" + fields[2] + "'", lineno);
      }
    }
    m.records.push_back({fields[0], *label, origin, static_cast<std::uint64_t>(m.records.size())});
  }
  return m;
}

SampleManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  SampleManifest m = parse_manifest(in);
  m.base_dir = path.parent_path();
  for (const auto& r : m.records) {
    if (r.image_ref.starts_with(kSyntheticPrefix)) continue;
    if (!std::filesystem::exists(m.base_dir / r.image_ref)) {
      throw ValidationError("manifest " + path.string() + " references missing image " + r.image_ref);
    }
  }
  return m;
}

void write_manifest(std::ostream& out, const SampleManifest& m) {
  out << "# path\tlabel\torigin\n";
  for (const auto& r : m.records) {
    out << r.image_ref << '\t' << label_name(r.label) << '\t'
        << (r.origin == Origin::Original ? "original" : "duplicate") << '\n';
  }
}

void save_manifest(const std::filesystem::path& path, const SampleManifest& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path.string());
  write_manifest(out, m);
  if (!out) throw IoError("write failed for " + path.string());
}

SampleManifest oversample_balance(const SampleManifest& m, RngStream& rng) {
  const auto counts = m.class_counts();
  if (counts.fake == 0 || counts.real == 0) {
    throw ContractError("oversample_balance: both classes need at least one sample");
  }
  SampleManifest out = m;
  if (counts.fake == counts.real) return out;
  const Label minority = counts.fake < counts.real ? Label::Fake : Label::Real;
  const std::size_t deficit = std::max(counts.fake, counts.real) - std::min(counts.fake, counts.real);
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    if (m.records[i].label == minority) pool.push_back(i);
  }
  std::uint64_t id = next_id(m);
  out.records.reserve(m.records.size() + deficit);
  for (std::size_t k = 0; k < deficit; ++k) {
    SampleRecord dup = m.records[pool[static_cast<std::size_t>(rng.below(pool.size()))]];
    dup.origin = Origin::Duplicate;
    dup.id = id++;
    out.records.push_back(std::move(dup));
  }
  return out;
}

SplitResult stratified_split(const SampleManifest& m, double train_fraction, RngStream& rng) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ContractError("stratified_split: train_fraction must be in (0, 1)");
  }
  SplitResult res;
  res.train.base_dir = m.base_dir;
  res.test.base_dir = m.base_dir;

  constexpr std::array<Label, kNumLabels> kOrder{Label::Fake, Label::Real};
  std::array<std::vector<std::size_t>, kNumLabels> members;
  for (std::size_t i = 0; i < m.records.size(); ++i) members[label_index(m.records[i].label)].push_back(i);

  // A tiny epsilon keeps products such as 10 * 0.7 from flooring one short.
  constexpr double kEps = 1e-9;
  std::array<std::size_t, kNumLabels> take{};
  std::array<double, kNumLabels> frac{};
  std::size_t assigned = 0;
  for (auto l : kOrder) {
    const double exact = static_cast<double>(members[label_index(l)].size()) * train_fraction;
    take[label_index(l)] = static_cast<std::size_t>(std::floor(exact + kEps));
    frac[label_index(l)] = exact - static_cast<double>(take[label_index(l)]);
    assigned += take[label_index(l)];
  }
  const auto target = static_cast<std::size_t>(std::floor(static_cast<double>(m.records.size()) * train_fraction + kEps));
  std::vector<Label> by_frac(kOrder.begin(), kOrder.end());
  std::stable_sort(by_frac.begin(), by_frac.end(),
                   [&](Label a, Label b) { return frac[label_index(a)] > frac[label_index(b)]; });
  for (std::size_t k = 0; assigned < target && k < by_frac.size(); ++k) {
    auto& t = take[label_index(by_frac[k])];
    if (t < members[label_index(by_frac[k])].size()) {
      ++t;
      ++assigned;
    }
  }

  std::vector<bool> to_train(m.records.size(), false);
  for (auto l : kOrder) {
    auto idx = members[label_index(l)];
    shuffle(idx, rng);
    const std::size_t n_train = take[label_index(l)];
    for (std::size_t k = 0; k < n_train; ++k) to_train[idx[k]] = true;
    if (!idx.empty() && (n_train == 0 || n_train == idx.size())) {
      res.warnings.push_back("class " + std::string(label_name(l)) + " with " + std::to_string(idx.size()) +
                             " samples cannot appear in both splits");
    }
  }
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    (to_train[i] ? res.train : res.test).records.push_back(m.records[i]);
  }
  return res;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t count, std::size_t batch_size, bool shuffle_order,
                                                    std::uint64_t seed, std::uint64_t epoch) {
  if (batch_size == 0) throw ContractError("epoch_batches: batch_size must be at least 1");
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (shuffle_order) {
    RngStream rng(hash_combine(hash_combine(seed, 0x5348554646ULL), epoch));
    shuffle(order, rng);
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < count; i += batch_size) {
    batches.emplace_back(order.begin() + static_cast<long>(i),
                         order.begin() + static_cast<long>(std::min(count, i + batch_size)));
  }
  return batches;
}

// ---------------------------------------------------------------------------

void SyntheticSpec::validate() const {
  if (image_size < 8) throw ContractError("synthetic image_size must be at least 8");
  if (real_count == 0 || fake_count == 0) throw ContractError("synthetic counts must be positive");
  if (!(artifact_period > 1.0)) throw ContractError("synthetic artifact_period must exceed one pixel");
  if (!(artifact_amplitude >= 0.0 && noise_std >= 0.0)) throw ContractError("synthetic amplitudes must be >= 0");
}

std::string synthetic_ref(Label label, std::size_t index) {
  return std::string(kSyntheticPrefix) + std::string(label_name(label)) + ":" + std::to_string(index);
}

ImageBuffer render_synthetic(const SyntheticSpec& spec, Label label, std::size_t index) {
  const std::size_t n = spec.image_size;
  const double nd = static_cast<double>(n);
  // Scene content depends on (seed, index) only, so the two classes share a
  // scene distribution; the artifact stream is separate.
  RngStream scene(hash_combine(hash_combine(spec.seed, 0x5343454E45ULL), hash_combine(index, label_index(label))));
  RngStream art(hash_combine(hash_combine(spec.seed, 0x415254ULL), hash_combine(index, label_index(label))));
  ImageBuffer img(n, n);

  std::array<double, 3> base{};
  std::array<double, 3> grad{};
  for (std::size_t c = 0; c < 3; ++c) {
    base[c] = scene.uniform(0.25, 0.75);
    grad[c] = scene.uniform(-0.15, 0.15);
  }
  const double gdir = scene.uniform(0.0, 2.0 * std::numbers::pi);
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      const double t = ((static_cast<double>(x) - nd / 2) * std::cos(gdir) + (static_cast<double>(y) - nd / 2) * std::sin(gdir)) / nd;
      for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = static_cast<float>(base[c] + grad[c] * t);
    }
  }
  const int blobs = 3 + static_cast<int>(scene.below(3));
  for (int b = 0; b < blobs; ++b) {
    const double cx = scene.uniform(0.0, nd);
    const double cy = scene.uniform(0.0, nd);
    const double r = scene.uniform(0.08, 0.25) * nd;
    std::array<double, 3> col{};
    for (auto& v : col) v = scene.uniform(-0.3, 0.3);
    for (std::size_t y = 0; y < n; ++y) {
      for (std::size_t x = 0; x < n; ++x) {
        const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        const double w = std::exp(-d2 / (2 * r * r));
        for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) += static_cast<float>(col[c] * w);
      }
    }
  }

  // Elliptical face region, present in both classes.
  const double fx = nd / 2 + scene.uniform(-0.1, 0.1) * nd;
  const double fy = nd / 2 + scene.uniform(-0.1, 0.1) * nd;
  const double rx = scene.uniform(0.22, 0.32) * nd;
  const double ry = rx * scene.uniform(1.1, 1.35);
  const double lum = scene.uniform(0.45, 0.85);
  const std::array<double, 3> skin{lum, 0.85 * lum, 0.7 * lum};
  auto face_mask = [&](double x, double y) {
    const double e = ((x - fx) * (x - fx)) / (rx * rx) + ((y - fy) * (y - fy)) / (ry * ry);
    return std::clamp((1.0 - e) * 4.0, 0.0, 1.0);
  };
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      const double w = 0.8 * face_mask(static_cast<double>(x), static_cast<double>(y));
      for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = static_cast<float>((1 - w) * img.at(c, y, x) + w * skin[c]);
    }
  }

  if (label == Label::Fake) {
    // Row-interleaved banding locked to the pixel grid (unchanged by
    // horizontal flips), plus a luminance lift of varying strength over the
    // blended face.
    const auto cell = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(spec.artifact_period / 2)));
    const double lift = spec.tone_shift * art.uniform(0.5, 1.0);
    for (std::size_t y = 0; y < n; ++y) {
      for (std::size_t x = 0; x < n; ++x) {
        const double w = face_mask(static_cast<double>(x), static_cast<double>(y));
        const double g = ((y / cell) % 2 == 0 ? 1.0 : -1.0) * spec.artifact_amplitude;
        for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) += static_cast<float>(w * (g + lift));
      }
    }
  }

  RngStream noise(hash_combine(hash_combine(spec.seed, 0x4E4F495345ULL), hash_combine(index, label_index(label))));
  for (auto& v : img.data) v = std::clamp(static_cast<float>(v + spec.noise_std * noise.normal()), 0.0f, 1.0f);
  return img;
}

SampleManifest synthetic_manifest(const SyntheticSpec& spec) {
  spec.validate();
  SampleManifest m;
  for (std::size_t i = 0; i < spec.fake_count; ++i) {
    m.records.push_back({synthetic_ref(Label::Fake, i), Label::Fake, Origin::Original, m.records.size()});
  }
  for (std::size_t i = 0; i < spec.real_count; ++i) {
    m.records.push_back({synthetic_ref(Label::Real, i), Label::Real, Origin::Original, m.records.size()});
  }
  return m;
}

const ImageBuffer& ImageSource::load(const SampleManifest& manifest, const SampleRecord& record) {
  return load(manifest.base_dir, record.image_ref);
}

const ImageBuffer& ImageSource::load(const std::filesystem::path& base_dir, const std::string& ref) {
  const bool synthetic = ref.starts_with(kSyntheticPrefix);
  const std::string key = synthetic ? ref : (base_dir / ref).lexically_normal().string();
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  ImageBuffer img;
  if (synthetic) {
    if (!synthetic_) throw ValidationError("synthetic image reference '" + ref + "' without a synthetic spec");
    const std::string_view rest = std::string_view(ref).substr(kSyntheticPrefix.size());
    const auto colon = rest.find(':');
    const auto label = parse_label(rest.substr(0, colon));
    if (colon == std::string_view::npos || !label) throw ValidationError("malformed synthetic reference '" + ref + "'");
    std::size_t index = 0;
    try {
      index = std::stoul(std::string(rest.substr(colon + 1)));
    } catch (const std::exception&) {
      throw ValidationError("malformed synthetic reference '" + ref + "'");
    }
    img = render_synthetic(*synthetic_, *label, index);
  } else {
    img = load_image(base_dir / ref);
  }
  return cache_.emplace(key, std::move(img)).first->second;
}

}  // namespace deitfake
