#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace affield {

/// Raised for any violated precondition or malformed input. Maps to CLI exit code 1.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised for failures during an otherwise valid run (I/O, divergence). Exit code 2.
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// H x W map of class IDs in [0, C).
class LabelGrid {
 public:
  LabelGrid() = default;
  LabelGrid(int height, int width, int num_classes, std::vector<int> labels);

  static LabelGrid filled(int height, int width, int num_classes, int label);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int num_classes() const noexcept { return num_classes_; }
  std::size_t pixels() const noexcept { return labels_.size(); }

  int operator()(int row, int col) const { return labels_[static_cast<std::size_t>(row) * width_ + col]; }
  int at(std::size_t index) const { return labels_[index]; }
  std::span<const int> labels() const noexcept { return labels_; }

  bool operator==(const LabelGrid&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int num_classes_ = 0;
  std::vector<int> labels_;
};

/// H x W x C per-pixel class distribution. Rows sum to one within 1e-6.
class ProbGrid {
 public:
  ProbGrid() = default;
  ProbGrid(int height, int width, int num_classes, std::vector<double> probs);

  /// Row-wise softmax of H x W x C logits.
  static ProbGrid from_logits(int height, int width, int num_classes, std::span<const double> logits);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int num_classes() const noexcept { return num_classes_; }
  std::size_t pixels() const noexcept { return static_cast<std::size_t>(height_) * width_; }

  double operator()(std::size_t pixel, int cls) const { return probs_[pixel * num_classes_ + cls]; }
  std::span<const double> probs() const noexcept { return probs_; }

  bool operator==(const ProbGrid&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int num_classes_ = 0;
  std::vector<double> probs_;
};

/// Unconstrained H x W x D real tensor. Used for input feature maps and as
/// the on-disk form of embeddings.
class DenseGrid {
 public:
  DenseGrid() = default;
  DenseGrid(int height, int width, int channels, std::vector<double> values);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int channels() const noexcept { return channels_; }
  std::size_t pixels() const noexcept { return static_cast<std::size_t>(height_) * width_; }

  double operator()(std::size_t pixel, int ch) const { return values_[pixel * channels_ + ch]; }
  std::span<const double> values() const noexcept { return values_; }

  bool operator==(const DenseGrid&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> values_;
};

using FeatureMap = DenseGrid;

/// Per-pixel L2-normalized embedding. Keeps the pre-normalization norms so
/// gradients can be pulled back through the normalization.
///
/// A vector whose norm falls below kMinNorm is replaced by the first basis
/// vector and receives zero gradient.
class EmbedGrid {
 public:
  static constexpr double kMinNorm = 1e-12;

  EmbedGrid() = default;
  explicit EmbedGrid(const DenseGrid& raw);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int dim() const noexcept { return dim_; }
  std::size_t pixels() const noexcept { return norms_.size(); }

  std::span<const double> vector(std::size_t pixel) const {
    return std::span<const double>(unit_).subspan(pixel * dim_, dim_);
  }
  std::span<const double> vectors() const noexcept { return unit_; }
  double norm(std::size_t pixel) const { return norms_[pixel]; }

  DenseGrid as_dense() const { return DenseGrid(height_, width_, dim_, unit_); }

 private:
  int height_ = 0;
  int width_ = 0;
  int dim_ = 0;
  std::vector<double> unit_;
  std::vector<double> norms_;
};

/// Sorted set of distinct odd neighborhood sizes, each >= 3.
class KernelSpec {
 public:
  KernelSpec() = default;
  explicit KernelSpec(std::vector<int> sizes);

  std::span<const int> sizes() const noexcept { return sizes_; }
  std::size_t size() const noexcept { return sizes_.size(); }
  int operator[](std::size_t i) const { return sizes_[i]; }
  int smallest() const { return sizes_.front(); }
  int largest() const { return sizes_.back(); }
  std::size_t index_of(int k) const;

  bool operator==(const KernelSpec&) const = default;

 private:
  std::vector<int> sizes_;
};

struct PixelPair {
  std::uint32_t center;
  std::uint32_t neighbor;
  bool operator==(const PixelPair&) const = default;
};

struct PairSet {
  int height = 0;
  int width = 0;
  int k = 0;
  std::vector<PixelPair> pairs;
};

/// Throws ValidationError unless k is odd and >= 3.
void check_kernel_size(int k);

/// All ordered (center, neighbor) pairs with the neighbor inside the k x k
/// window of the center, both in-bounds, center != neighbor. Ordered by
/// row-major center, then row-major offset.
PairSet make_pairs(int height, int width, int k);

ProbGrid one_hot(const LabelGrid& grid);
LabelGrid argmax(const ProbGrid& grid);

/// argmax over channels of an H x W x C score array (first maximum wins).
LabelGrid argmax(int height, int width, int num_classes, std::span<const double> scores);

}  // namespace affield
