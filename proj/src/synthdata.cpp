#include "affield/synthdata.hpp"

#include <algorithm>
#include <cmath>

#include "affield/rng.hpp"

namespace affield {

namespace {

int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

void draw_disc(std::vector<int>& labels, int height, int width, int cy, int cx, int r_outer, int r_inner, int label) {
  for (int y = std::max(0, cy - r_outer); y <= std::min(height - 1, cy + r_outer); ++y) {
    for (int x = std::max(0, cx - r_outer); x <= std::min(width - 1, cx + r_outer); ++x) {
      const int d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
      if (d2 <= r_outer * r_outer && (r_inner < 0 || d2 > r_inner * r_inner)) {
        labels[static_cast<std::size_t>(y) * width + x] = label;
      }
    }
  }
}

struct ShapePainter {
  std::vector<int>& labels;
  int height, width, label;
  Rng& rng;

  void operator()(const BlobShape& s) const {
    for (int i = 0; i < s.count; ++i) {
      const int r = uniform_int(rng, s.radius_min, s.radius_max);
      const int cy = uniform_int(rng, r, height - 1 - r);
      const int cx = uniform_int(rng, r, width - 1 - r);
      draw_disc(labels, height, width, cy, cx, r, -1, label);
    }
  }

  void operator()(const RingShape& s) const {
    for (int i = 0; i < s.count; ++i) {
      const int cy = uniform_int(rng, s.radius, height - 1 - s.radius);
      const int cx = uniform_int(rng, s.radius, width - 1 - s.radius);
      draw_disc(labels, height, width, cy, cx, s.radius, s.radius - s.thickness, label);
    }
  }

  void operator()(const BarsShape& s) const {
    for (int i = 0; i < s.count; ++i) {
      const bool horizontal = uniform_int(rng, 0, 1) == 0;
      const int along = horizontal ? width : height;
      const int across = horizontal ? height : width;
      const int thickness = uniform_int(rng, s.width_min, s.width_max);
      const int length = uniform_int(rng, s.length_min, std::min(s.length_max, along));
      const int start = uniform_int(rng, 0, along - length);
      const int offset = uniform_int(rng, 0, across - thickness);
      for (int a = start; a < start + length; ++a) {
        for (int b = offset; b < offset + thickness; ++b) {
          const int y = horizontal ? b : a;
          const int x = horizontal ? a : b;
          labels[static_cast<std::size_t>(y) * width + x] = label;
        }
      }
    }
  }
};

std::uint64_t scene_seed(const SceneSpec& spec, std::uint64_t index) { return substream_seed(spec.seed, index); }

}  // namespace

std::string SceneSpec::class_name(int c) const {
  if (c >= 0 && static_cast<std::size_t>(c) < class_names.size()) return class_names[c];
  if (c == 0) return "background";
  return "class" + std::to_string(c);
}

void SceneSpec::validate() const {
  std::string errors;
  if (height <= 0 || width <= 0) errors += " height and width must be positive;";
  if (shapes.empty()) errors += " at least one shape class required;";
  if (!(std::isfinite(feature_noise_sigma) && feature_noise_sigma >= 0.0)) errors += " feature_noise_sigma must be >= 0;";
  if (!(label_bleed >= 0.0 && label_bleed < 1.0)) errors += " label_bleed must be in [0, 1);";
  if (!std::isfinite(mean_spacing)) errors += " mean_spacing must be finite;";
  if (!class_names.empty() && class_names.size() != shapes.size() + 1) errors += " class_names must cover every class;";
  const int side = std::min(height, width);
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const std::string where = " shape " + std::to_string(i) + ":";
    if (const auto* b = std::get_if<BlobShape>(&shapes[i])) {
      if (b->radius_min < 1 || b->radius_max < b->radius_min) errors += where + " invalid blob radius range;";
      else if (2 * b->radius_max + 1 > side) errors += where + " blob does not fit;";
      if (b->count < 1) errors += where + " count must be >= 1;";
    } else if (const auto* r = std::get_if<RingShape>(&shapes[i])) {
      if (r->radius < 1 || r->thickness < 1 || r->thickness > r->radius) errors += where + " invalid ring geometry;";
      else if (2 * r->radius + 1 > side) errors += where + " ring does not fit;";
      if (r->count < 1) errors += where + " count must be >= 1;";
    } else if (const auto* s = std::get_if<BarsShape>(&shapes[i])) {
      if (s->width_min < 1 || s->width_max < s->width_min) errors += where + " invalid bar width range;";
      else if (s->width_max > side) errors += where + " bars too wide to fit;";
      if (s->length_min < 1 || s->length_max < s->length_min) errors += where + " invalid bar length range;";
      else if (s->length_min > side) errors += where + " bars too long to fit;";
      if (s->count < 1) errors += where + " count must be >= 1;";
    }
  }
  if (!errors.empty()) throw ValidationError("invalid scene spec:" + errors);
}

SceneSpec thinblob32() {
  SceneSpec spec;
  spec.height = 32;
  spec.width = 32;
  spec.shapes = {BlobShape{6, 9, 1}, BarsShape{1, 2, 3, 12, 24}};
  spec.class_names = {"background", "blob", "bars"};
  spec.feature_noise_sigma = 0.5;
  spec.label_bleed = 0.1;
  spec.seed = 7;
  return spec;
}

LabelGrid rasterize_scene(const SceneSpec& spec, std::uint64_t index) {
  spec.validate();
  Rng rng(scene_seed(spec, index));
  std::vector<int> labels(static_cast<std::size_t>(spec.height) * spec.width);
  // Redraw until no class has been painted over completely.
  constexpr int kAttempts = 100;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    std::fill(labels.begin(), labels.end(), 0);
    for (std::size_t i = 0; i < spec.shapes.size(); ++i) {
      std::visit(ShapePainter{labels, spec.height, spec.width, static_cast<int>(i) + 1, rng}, spec.shapes[i]);
    }
    std::vector<char> present(spec.num_classes(), 0);
    for (int l : labels) present[l] = 1;
    if (std::find(present.begin(), present.end(), 0) == present.end()) {
      return LabelGrid(spec.height, spec.width, spec.num_classes(), std::move(labels));
    }
  }
  throw ValidationError("scene spec: shapes repeatedly cover each other; every class cannot be placed");
}

std::vector<Scene> generate(const SceneSpec& spec, int n, std::uint64_t index_offset) {
  spec.validate();
  if (n < 1) throw ValidationError("generate: scene count must be >= 1");
  const int h = spec.height, w = spec.width;
  std::vector<Scene> scenes;
  scenes.reserve(n);
  for (int s = 0; s < n; ++s) {
    const std::uint64_t index = index_offset + static_cast<std::uint64_t>(s);
    LabelGrid gt = rasterize_scene(spec, index);
    Rng rng(substream_seed(scene_seed(spec, index), "features"));
    std::normal_distribution<double> noise(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<double> features(gt.pixels() * kFeatureChannels);
    std::vector<int> others;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t p = static_cast<std::size_t>(y) * w + x;
        const int label = gt.at(p);
        others.clear();
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int ny = y + dy, nx = x + dx;
            if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
            if (gt(ny, nx) != label) others.push_back(gt(ny, nx));
          }
        }
        int appearance = label;
        const double u = unit(rng);
        if (!others.empty() && u < spec.label_bleed) {
          appearance = others[std::uniform_int_distribution<std::size_t>(0, others.size() - 1)(rng)];
        }
        const double z = noise(rng);
        features[p * kFeatureChannels + 0] = appearance * spec.mean_spacing + spec.feature_noise_sigma * z;
        features[p * kFeatureChannels + 1] = static_cast<double>(y) / h;
        features[p * kFeatureChannels + 2] = static_cast<double>(x) / w;
      }
    }
    scenes.push_back({std::move(gt), FeatureMap(h, w, kFeatureChannels, std::move(features))});
  }
  return scenes;
}

LabelGrid nearest_mean_labels(const SceneSpec& spec, const FeatureMap& features) {
  const int classes = spec.num_classes();
  std::vector<int> labels(features.pixels());
  for (std::size_t p = 0; p < labels.size(); ++p) {
    const double v = features(p, 0);
    int best = 0;
    double best_d = std::abs(v);
    for (int c = 1; c < classes; ++c) {
      const double d = std::abs(v - c * spec.mean_spacing);
      if (d < best_d) {
        best = c;
        best_d = d;
      }
    }
    labels[p] = best;
  }
  return LabelGrid(features.height(), features.width(), classes, std::move(labels));
}

}  // namespace affield
