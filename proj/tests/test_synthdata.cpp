#include <gtest/gtest.h>

#include <cmath>

#include "affield/metrics.hpp"
#include "affield/synthdata.hpp"

using namespace affield;

namespace {

double nearest_mean_accuracy(const SceneSpec& spec, const std::vector<Scene>& scenes) {
  std::int64_t right = 0, total = 0;
  for (const auto& s : scenes) {
    const auto pred = nearest_mean_labels(spec, s.features);
    for (std::size_t i = 0; i < pred.pixels(); ++i) right += pred.at(i) == s.gt.at(i);
    total += static_cast<std::int64_t>(pred.pixels());
  }
  return static_cast<double>(right) / static_cast<double>(total);
}

}  // namespace

TEST(Synthdata, Thinblob32Preset) {
  const auto spec = thinblob32();
  EXPECT_EQ(spec.height, 32);
  EXPECT_EQ(spec.width, 32);
  EXPECT_EQ(spec.num_classes(), 3);
  EXPECT_EQ(spec.class_name(2), "bars");
  EXPECT_EQ(spec.feature_noise_sigma, 0.5);
  EXPECT_EQ(spec.label_bleed, 0.1);
  EXPECT_EQ(spec.seed, 7u);
}

TEST(Synthdata, Deterministic) {
  const auto spec = thinblob32();
  const auto a = generate(spec, 5), b = generate(spec, 5);
  for (int i = 0; i < 5; ++i) {
    EXPECT_EQ(a[i].gt, b[i].gt);
    EXPECT_EQ(a[i].features, b[i].features);
  }
  // Scene i does not depend on how many scenes were requested or the offset.
  EXPECT_EQ(generate(spec, 1, 3)[0].gt, a[3].gt);
  auto other = spec;
  other.seed = 8;
  EXPECT_NE(generate(other, 1)[0].gt, a[0].gt);
}

TEST(Synthdata, EveryClassAppearsAndFeaturesLookRight) {
  const auto spec = thinblob32();
  for (const auto& s : generate(spec, 20)) {
    std::vector<int> count(3, 0);
    for (int l : s.gt.labels()) ++count[l];
    for (int c = 0; c < 3; ++c) EXPECT_GT(count[c], 0);
    ASSERT_EQ(s.features.channels(), kFeatureChannels);
    EXPECT_DOUBLE_EQ(s.features(33, 1), 1.0 / 32.0);  // row 1
    EXPECT_DOUBLE_EQ(s.features(33, 2), 1.0 / 32.0);  // col 1
  }
}

TEST(Synthdata, BarsAreThin) {
  // With one bar per scene the bar is painted last and stays whole, so its
  // bounding box gives the drawn width and length.
  auto spec = thinblob32();
  std::get<BarsShape>(spec.shapes[1]).count = 1;
  for (std::uint64_t i = 0; i < 50; ++i) {
    const auto g = rasterize_scene(spec, i);
    int y0 = 99, y1 = -1, x0 = 99, x1 = -1, n = 0;
    for (int y = 0; y < g.height(); ++y)
      for (int x = 0; x < g.width(); ++x)
        if (g(y, x) == 2) {
          y0 = std::min(y0, y), y1 = std::max(y1, y);
          x0 = std::min(x0, x), x1 = std::max(x1, x);
          ++n;
        }
    const int a = y1 - y0 + 1, b = x1 - x0 + 1;
    EXPECT_EQ(n, a * b);
    EXPECT_LE(std::min(a, b), 2);
    EXPECT_GE(std::max(a, b), 12);
    EXPECT_LE(std::max(a, b), 24);
  }
}

TEST(Synthdata, NoiselessFeaturesAreSeparable) {
  auto spec = thinblob32();
  spec.feature_noise_sigma = 0.0;
  spec.label_bleed = 0.0;
  const auto scenes = generate(spec, 10);
  EXPECT_EQ(nearest_mean_accuracy(spec, scenes), 1.0);
  for (const auto& s : scenes)
    for (std::size_t i = 0; i < s.gt.pixels(); ++i) EXPECT_EQ(s.features(i, 0), s.gt.at(i) * spec.mean_spacing);
}

TEST(Synthdata, NoiseAndBleedHurtBoundariesMost) {
  const auto spec = thinblob32();
  const auto scenes = generate(spec, 100);
  EXPECT_LT(nearest_mean_accuracy(spec, scenes), 1.0);
  std::int64_t band_right = 0, band = 0, inner_right = 0, inner = 0;
  for (const auto& s : scenes) {
    const auto pred = nearest_mean_labels(spec, s.features);
    const auto edge = boundary_map(s.gt);
    for (std::size_t i = 0; i < pred.pixels(); ++i) {
      const bool ok = pred.at(i) == s.gt.at(i);
      if (edge[i]) {
        band_right += ok;
        ++band;
      } else {
        inner_right += ok;
        ++inner;
      }
    }
  }
  EXPECT_LT(static_cast<double>(band_right) / band, static_cast<double>(inner_right) / inner);
}

TEST(Synthdata, AccuracyFallsWithNoise) {
  double last = 2.0;
  for (double sigma : {0.0, 0.25, 0.5}) {
    auto spec = thinblob32();
    spec.feature_noise_sigma = sigma;
    const double acc = nearest_mean_accuracy(spec, generate(spec, 50));
    EXPECT_LT(acc, last) << sigma;
    last = acc;
  }
}

TEST(Synthdata, ClassPixelCountsFollowShapeSpecs) {
  // Blobs are single discs of radius 6..9 that bars may partly cover.
  auto spec = thinblob32();
  spec.feature_noise_sigma = 0.0;
  for (std::uint64_t i = 0; i < 30; ++i) {
    const auto g = rasterize_scene(spec, i);
    int blob = 0, bars = 0;
    for (int l : g.labels()) {
      blob += l == 1;
      bars += l == 2;
    }
    const double pi = std::acos(-1.0);
    EXPECT_LE(blob, static_cast<int>(pi * 10 * 10));
    EXPECT_LE(bars, 3 * 2 * 24);
    EXPECT_GE(bars, 12);
  }
}

TEST(Synthdata, Validation) {
  auto spec = thinblob32();
  spec.feature_noise_sigma = -1.0;
  EXPECT_THROW(spec.validate(), ValidationError);
  spec = thinblob32();
  spec.label_bleed = 1.0;
  EXPECT_THROW(spec.validate(), ValidationError);
  spec = thinblob32();
  spec.height = 8;  // blob of radius 9 cannot fit
  EXPECT_THROW(spec.validate(), ValidationError);
  EXPECT_THROW(generate(thinblob32(), 0), ValidationError);
}
