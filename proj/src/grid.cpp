#include "affield/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace affield {

namespace {

void check_dims(int height, int width, int channels, const char* what) {
  if (height <= 0 || width <= 0 || channels <= 0) {
    throw ValidationError(std::string(what) + ": dimensions must be positive (got " + std::to_string(height) + "x" +
                          std::to_string(width) + "x" + std::to_string(channels) + ")");
  }
}

void check_length(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw ValidationError(std::string(what) + ": payload has " + std::to_string(got) + " values, expected " +
                          std::to_string(want));
  }
}

}  // namespace

LabelGrid::LabelGrid(int height, int width, int num_classes, std::vector<int> labels)
    : height_(height), width_(width), num_classes_(num_classes), labels_(std::move(labels)) {
  check_dims(height, width, num_classes, "LabelGrid");
  check_length(labels_.size(), static_cast<std::size_t>(height) * width, "LabelGrid");
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] < 0 || labels_[i] >= num_classes) {
      throw ValidationError("LabelGrid: label " + std::to_string(labels_[i]) + " at pixel " + std::to_string(i) +
                            " outside [0, " + std::to_string(num_classes) + ")");
    }
  }
}

LabelGrid LabelGrid::filled(int height, int width, int num_classes, int label) {
  check_dims(height, width, num_classes, "LabelGrid");
  return LabelGrid(height, width, num_classes, std::vector<int>(static_cast<std::size_t>(height) * width, label));
}

ProbGrid::ProbGrid(int height, int width, int num_classes, std::vector<double> probs)
    : height_(height), width_(width), num_classes_(num_classes), probs_(std::move(probs)) {
  check_dims(height, width, num_classes, "ProbGrid");
  check_length(probs_.size(), pixels() * num_classes, "ProbGrid");
  for (std::size_t p = 0; p < pixels(); ++p) {
    double sum = 0.0;
    for (int c = 0; c < num_classes; ++c) {
      const double v = probs_[p * num_classes + c];
      if (!(v >= 0.0 && v <= 1.0)) {
        throw ValidationError("ProbGrid: probability outside [0, 1] at pixel " + std::to_string(p));
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
      throw ValidationError("ProbGrid: pixel " + std::to_string(p) + " sums to " + std::to_string(sum));
    }
  }
}

ProbGrid ProbGrid::from_logits(int height, int width, int num_classes, std::span<const double> logits) {
  check_dims(height, width, num_classes, "ProbGrid");
  const std::size_t n = static_cast<std::size_t>(height) * width;
  check_length(logits.size(), n * num_classes, "ProbGrid::from_logits");
  std::vector<double> probs(logits.size());
  for (std::size_t p = 0; p < n; ++p) {
    const auto row = logits.subspan(p * num_classes, num_classes);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (int c = 0; c < num_classes; ++c) {
      probs[p * num_classes + c] = std::exp(row[c] - mx);
      z += probs[p * num_classes + c];
    }
    for (int c = 0; c < num_classes; ++c) probs[p * num_classes + c] /= z;
  }
  return ProbGrid(height, width, num_classes, std::move(probs));
}

DenseGrid::DenseGrid(int height, int width, int channels, std::vector<double> values)
    : height_(height), width_(width), channels_(channels), values_(std::move(values)) {
  check_dims(height, width, channels, "DenseGrid");
  check_length(values_.size(), pixels() * channels, "DenseGrid");
  for (double v : values_) {
    if (!std::isfinite(v)) throw ValidationError("DenseGrid: non-finite value");
  }
}

EmbedGrid::EmbedGrid(const DenseGrid& raw)
    : height_(raw.height()), width_(raw.width()), dim_(raw.channels()), unit_(raw.values().begin(), raw.values().end()),
      norms_(raw.pixels()) {
  for (std::size_t p = 0; p < norms_.size(); ++p) {
    double* v = unit_.data() + p * dim_;
    double sq = 0.0;
    for (int d = 0; d < dim_; ++d) sq += v[d] * v[d];
    const double norm = std::sqrt(sq);
    norms_[p] = norm;
    if (norm < kMinNorm) {
      std::fill(v, v + dim_, 0.0);
      v[0] = 1.0;
    } else {
      for (int d = 0; d < dim_; ++d) v[d] /= norm;
    }
  }
}

KernelSpec::KernelSpec(std::vector<int> sizes) : sizes_(std::move(sizes)) {
  if (sizes_.empty()) throw ValidationError("KernelSpec: at least one kernel size required");
  for (int k : sizes_) check_kernel_size(k);
  std::sort(sizes_.begin(), sizes_.end());
  if (std::adjacent_find(sizes_.begin(), sizes_.end()) != sizes_.end()) {
    throw ValidationError("KernelSpec: kernel sizes must be distinct");
  }
}

std::size_t KernelSpec::index_of(int k) const {
  const auto it = std::find(sizes_.begin(), sizes_.end(), k);
  if (it == sizes_.end()) throw ValidationError("KernelSpec: size " + std::to_string(k) + " not present");
  return static_cast<std::size_t>(it - sizes_.begin());
}

void check_kernel_size(int k) {
  if (k < 3 || k % 2 == 0) {
    throw ValidationError("kernel size must be odd and >= 3 (got " + std::to_string(k) + ")");
  }
}

PairSet make_pairs(int height, int width, int k) {
  check_kernel_size(k);
  if (height <= 0 || width <= 0) throw ValidationError("make_pairs: dimensions must be positive");
  PairSet set{height, width, k, {}};
  const int r = k / 2;
  for (int row = 0; row < height; ++row) {
    for (int col = 0; col < width; ++col) {
      const auto center = static_cast<std::uint32_t>(row * width + col);
      for (int dr = -r; dr <= r; ++dr) {
        const int nr = row + dr;
        if (nr < 0 || nr >= height) continue;
        for (int dc = -r; dc <= r; ++dc) {
          const int nc = col + dc;
          if ((dr == 0 && dc == 0) || nc < 0 || nc >= width) continue;
          set.pairs.push_back({center, static_cast<std::uint32_t>(nr * width + nc)});
        }
      }
    }
  }
  return set;
}

ProbGrid one_hot(const LabelGrid& grid) {
  const int c = grid.num_classes();
  std::vector<double> probs(grid.pixels() * c, 0.0);
  for (std::size_t p = 0; p < grid.pixels(); ++p) probs[p * c + grid.at(p)] = 1.0;
  return ProbGrid(grid.height(), grid.width(), c, std::move(probs));
}

LabelGrid argmax(int height, int width, int num_classes, std::span<const double> scores) {
  check_dims(height, width, num_classes, "argmax");
  const std::size_t n = static_cast<std::size_t>(height) * width;
  check_length(scores.size(), n * num_classes, "argmax");
  std::vector<int> labels(n);
  for (std::size_t p = 0; p < n; ++p) {
    const auto row = scores.subspan(p * num_classes, num_classes);
    labels[p] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return LabelGrid(height, width, num_classes, std::move(labels));
}

LabelGrid argmax(const ProbGrid& grid) {
  return argmax(grid.height(), grid.width(), grid.num_classes(), grid.probs());
}

}  // namespace affield
