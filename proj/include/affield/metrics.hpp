#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "affield/grid.hpp"

namespace affield {

/// counts[gt][pred] over evaluated pixels.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes);

  void add(const LabelGrid& pred, const LabelGrid& gt);
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);

  int num_classes() const noexcept { return classes_; }
  std::int64_t at(int gt, int pred) const { return counts_[static_cast<std::size_t>(gt) * classes_ + pred]; }
  std::int64_t total() const;

  /// TP / (TP + FP + FN); nullopt when the class is absent from both gt and pred.
  std::optional<double> iou(int c) const;

 private:
  int classes_;
  std::vector<std::int64_t> counts_;
};

struct ClassScores {
  std::vector<std::optional<double>> per_class;  ///< nullopt = excluded
  double mean = 0.0;                             ///< over included classes; 0 if none

  bool operator==(const ClassScores&) const = default;
};

/// Drops `ignore_class` from the class average (it keeps its per-class entry).
ClassScores mean_of(std::vector<std::optional<double>> per_class, std::optional<int> ignore_class = std::nullopt);

/// Pixel-wise IoU per class and mIoU over classes present in gt or pred.
ClassScores miou(const LabelGrid& pred, const LabelGrid& gt, std::optional<int> ignore_class = std::nullopt);
ClassScores miou(const ConfusionMatrix& cm, std::optional<int> ignore_class = std::nullopt);

/// 4-connected components of each class mask. instances[c] lists the pixel
/// index sets of class c, in row-major order of their first pixel.
struct InstanceSet {
  std::vector<std::vector<std::vector<std::uint32_t>>> instances;
  std::size_t count(int c) const { return instances[c].size(); }
};

InstanceSet find_instances(const LabelGrid& gt);

struct ImagePair {
  const LabelGrid* pred;
  const LabelGrid* gt;
};

/// U_c = sum_x n(c,x) IoU(c,x) / sum_x n(c,x), n = gt instance count of c in image x.
/// Classes with no gt instance in any image are excluded.
ClassScores instance_miou(std::span<const ImagePair> images, std::optional<int> ignore_class = std::nullopt);
ClassScores instance_miou(const LabelGrid& pred, const LabelGrid& gt, std::optional<int> ignore_class = std::nullopt);

/// True where a pixel has a 4-neighbor with a different label.
std::vector<char> boundary_map(const LabelGrid& grid);

struct BoundaryScore {
  double precision = 0.0;
  double recall = 0.0;
  double f_measure = 0.0;
  std::int64_t pred_pixels = 0;
  std::int64_t gt_pixels = 0;
  std::int64_t matched_pred = 0;
  std::int64_t matched_gt = 0;

  BoundaryScore& operator+=(const BoundaryScore& other);
  bool operator==(const BoundaryScore&) const = default;

  /// Recomputes P, R, F from the counts.
  void finalize();
};

/// One-to-one greedy matching of predicted to gt boundary pixels within
/// Chebyshev distance `tol`. Matching proceeds in rounds of increasing
/// distance (0, 1, ..., tol); inside a round, predicted pixels are visited in
/// row-major order and take the first unmatched gt pixel in row-major window
/// order. Both sets empty gives P = R = F = 1; an empty predicted set gives
/// P = 0, an empty gt set gives R = 0.
BoundaryScore boundary_prf(const LabelGrid& pred, const LabelGrid& gt, int tol);

/// Same, with both boundary maps restricted to pixels of class c or with a
/// 4-neighbor of class c (in the respective map).
BoundaryScore boundary_prf_class(const LabelGrid& pred, const LabelGrid& gt, int tol, int cls);

/// Matching on explicit boundary masks.
BoundaryScore match_boundaries(std::span<const char> pred_mask, std::span<const char> gt_mask, int height, int width,
                               int tol);

}  // namespace affield
