#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "affield/segmenter.hpp"

namespace affield {

/// Filled disc(s) with radius drawn uniformly from [radius_min, radius_max].
struct BlobShape {
  int radius_min = 6;
  int radius_max = 9;
  int count = 1;
};

/// Annulus: pixels with radius - thickness < distance <= radius.
struct RingShape {
  int radius = 8;
  int thickness = 2;
  int count = 1;
};

/// Axis-aligned straight bars, width in [width_min, width_max] pixels.
struct BarsShape {
  int width_min = 1;
  int width_max = 2;
  int count = 3;
  int length_min = 12;
  int length_max = 24;
};

using ShapeSpec = std::variant<BlobShape, RingShape, BarsShape>;

/// Class 0 is background; class i + 1 is drawn with shapes[i], in order, so
/// later shapes overwrite earlier ones.
struct SceneSpec {
  int height = 32;
  int width = 32;
  std::vector<ShapeSpec> shapes;
  std::vector<std::string> class_names;  ///< optional, size shapes + 1
  double feature_noise_sigma = 0.5;
  double label_bleed = 0.1;
  double mean_spacing = 1.0;  ///< class c has appearance mean c * mean_spacing
  std::uint64_t seed = 7;

  int num_classes() const { return static_cast<int>(shapes.size()) + 1; }
  std::string class_name(int c) const;
  void validate() const;
};

/// 32x32, background + blob (r in [6, 9]) + bars (width 1-2), sigma 0.5, bleed 0.1, seed 7.
SceneSpec thinblob32();

/// Default split sizes of the thinblob-32 benchmark.
inline constexpr int kThinblobTrain = 200;
inline constexpr int kThinblobTest = 50;

/// Per-pixel features: [appearance, row / H, col / W].
inline constexpr int kFeatureChannels = 3;

/// Label map only, before features are drawn. Deterministic in (spec, index).
/// Every class, background included, is present in the result.
LabelGrid rasterize_scene(const SceneSpec& spec, std::uint64_t index);

/// Scenes index_offset .. index_offset + n - 1. Deterministic in (spec, index).
std::vector<Scene> generate(const SceneSpec& spec, int n, std::uint64_t index_offset = 0);

/// Nearest class-mean classification of the appearance channel alone.
LabelGrid nearest_mean_labels(const SceneSpec& spec, const FeatureMap& features);

}  // namespace affield
