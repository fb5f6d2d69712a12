#include "affield/metrics.hpp"

#include <algorithm>
#include <cstdlib>
#include <deque>

namespace affield {

namespace {

void check_pair(const LabelGrid& pred, const LabelGrid& gt, const char* what) {
  if (pred.height() != gt.height() || pred.width() != gt.width()) {
    throw ValidationError(std::string(what) + ": prediction and ground truth shapes differ");
  }
  if (pred.num_classes() != gt.num_classes()) {
    throw ValidationError(std::string(what) + ": prediction and ground truth class counts differ");
  }
}

std::vector<char> class_adjacent(const LabelGrid& grid, int cls) {
  const int h = grid.height(), w = grid.width();
  std::vector<char> out(grid.pixels(), 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      bool hit = grid(y, x) == cls;
      hit = hit || (y > 0 && grid(y - 1, x) == cls) || (y + 1 < h && grid(y + 1, x) == cls);
      hit = hit || (x > 0 && grid(y, x - 1) == cls) || (x + 1 < w && grid(y, x + 1) == cls);
      out[static_cast<std::size_t>(y) * w + x] = hit;
    }
  }
  return out;
}

}  // namespace

ConfusionMatrix::ConfusionMatrix(int num_classes)
    : classes_(num_classes), counts_(static_cast<std::size_t>(num_classes) * num_classes, 0) {
  if (num_classes <= 0) throw ValidationError("ConfusionMatrix: class count must be positive");
}

void ConfusionMatrix::add(const LabelGrid& pred, const LabelGrid& gt) {
  check_pair(pred, gt, "ConfusionMatrix");
  if (gt.num_classes() != classes_) throw ValidationError("ConfusionMatrix: class count mismatch");
  for (std::size_t i = 0; i < gt.pixels(); ++i) ++counts_[static_cast<std::size_t>(gt.at(i)) * classes_ + pred.at(i)];
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.classes_ != classes_) throw ValidationError("ConfusionMatrix: class count mismatch");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  return *this;
}

std::int64_t ConfusionMatrix::total() const {
  std::int64_t sum = 0;
  for (auto v : counts_) sum += v;
  return sum;
}

std::optional<double> ConfusionMatrix::iou(int c) const {
  const std::int64_t tp = at(c, c);
  std::int64_t fp = 0, fn = 0;
  for (int o = 0; o < classes_; ++o) {
    if (o == c) continue;
    fn += at(c, o);
    fp += at(o, c);
  }
  const std::int64_t denom = tp + fp + fn;
  if (denom == 0) return std::nullopt;
  return static_cast<double>(tp) / static_cast<double>(denom);
}

ClassScores mean_of(std::vector<std::optional<double>> per_class, std::optional<int> ignore_class) {
  ClassScores out;
  out.per_class = std::move(per_class);
  double sum = 0.0;
  int n = 0;
  for (std::size_t c = 0; c < out.per_class.size(); ++c) {
    if (!out.per_class[c] || (ignore_class && *ignore_class == static_cast<int>(c))) continue;
    sum += *out.per_class[c];
    ++n;
  }
  out.mean = n > 0 ? sum / n : 0.0;
  return out;
}

ClassScores miou(const ConfusionMatrix& cm, std::optional<int> ignore_class) {
  std::vector<std::optional<double>> per_class(cm.num_classes());
  for (int c = 0; c < cm.num_classes(); ++c) per_class[c] = cm.iou(c);
  return mean_of(std::move(per_class), ignore_class);
}

ClassScores miou(const LabelGrid& pred, const LabelGrid& gt, std::optional<int> ignore_class) {
  check_pair(pred, gt, "miou");
  ConfusionMatrix cm(gt.num_classes());
  cm.add(pred, gt);
  return miou(cm, ignore_class);
}

InstanceSet find_instances(const LabelGrid& gt) {
  const int h = gt.height(), w = gt.width();
  InstanceSet set;
  set.instances.resize(gt.num_classes());
  std::vector<char> visited(gt.pixels(), 0);
  std::deque<std::uint32_t> queue;
  for (std::size_t start = 0; start < gt.pixels(); ++start) {
    if (visited[start]) continue;
    const int label = gt.at(start);
    std::vector<std::uint32_t> component;
    visited[start] = 1;
    queue.push_back(static_cast<std::uint32_t>(start));
    while (!queue.empty()) {
      const auto p = queue.front();
      queue.pop_front();
      component.push_back(p);
      const int y = static_cast<int>(p) / w, x = static_cast<int>(p) % w;
      const int ny[4] = {y - 1, y + 1, y, y};
      const int nx[4] = {x, x, x - 1, x + 1};
      for (int d = 0; d < 4; ++d) {
        if (ny[d] < 0 || ny[d] >= h || nx[d] < 0 || nx[d] >= w) continue;
        const auto q = static_cast<std::uint32_t>(ny[d] * w + nx[d]);
        if (!visited[q] && gt.at(q) == label) {
          visited[q] = 1;
          queue.push_back(q);
        }
      }
    }
    std::sort(component.begin(), component.end());
    set.instances[label].push_back(std::move(component));
  }
  return set;
}

ClassScores instance_miou(std::span<const ImagePair> images, std::optional<int> ignore_class) {
  if (images.empty()) throw ValidationError("instance_miou: no images");
  const int classes = images.front().gt->num_classes();
  std::vector<double> weighted(classes, 0.0);
  std::vector<std::int64_t> weights(classes, 0);
  for (const auto& image : images) {
    check_pair(*image.pred, *image.gt, "instance_miou");
    if (image.gt->num_classes() != classes) throw ValidationError("instance_miou: class count differs across images");
    ConfusionMatrix cm(classes);
    cm.add(*image.pred, *image.gt);
    const auto inst = find_instances(*image.gt);
    for (int c = 0; c < classes; ++c) {
      const auto n = static_cast<std::int64_t>(inst.count(c));
      if (n == 0) continue;
      weighted[c] += static_cast<double>(n) * cm.iou(c).value();
      weights[c] += n;
    }
  }
  std::vector<std::optional<double>> per_class(classes);
  for (int c = 0; c < classes; ++c) {
    if (weights[c] > 0) per_class[c] = weighted[c] / static_cast<double>(weights[c]);
  }
  return mean_of(std::move(per_class), ignore_class);
}

ClassScores instance_miou(const LabelGrid& pred, const LabelGrid& gt, std::optional<int> ignore_class) {
  const ImagePair pair{&pred, &gt};
  return instance_miou(std::span<const ImagePair>(&pair, 1), ignore_class);
}

std::vector<char> boundary_map(const LabelGrid& grid) {
  const int h = grid.height(), w = grid.width();
  std::vector<char> out(grid.pixels(), 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int l = grid(y, x);
      const bool edge = (y > 0 && grid(y - 1, x) != l) || (y + 1 < h && grid(y + 1, x) != l) ||
                        (x > 0 && grid(y, x - 1) != l) || (x + 1 < w && grid(y, x + 1) != l);
      out[static_cast<std::size_t>(y) * w + x] = edge;
    }
  }
  return out;
}

BoundaryScore& BoundaryScore::operator+=(const BoundaryScore& other) {
  pred_pixels += other.pred_pixels;
  gt_pixels += other.gt_pixels;
  matched_pred += other.matched_pred;
  matched_gt += other.matched_gt;
  finalize();
  return *this;
}

void BoundaryScore::finalize() {
  if (pred_pixels == 0 && gt_pixels == 0) {
    precision = recall = f_measure = 1.0;
    return;
  }
  precision = pred_pixels > 0 ? static_cast<double>(matched_pred) / static_cast<double>(pred_pixels) : 0.0;
  recall = gt_pixels > 0 ? static_cast<double>(matched_gt) / static_cast<double>(gt_pixels) : 0.0;
  f_measure = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

BoundaryScore match_boundaries(std::span<const char> pred_mask, std::span<const char> gt_mask, int height, int width,
                               int tol) {
  if (tol < 0) throw ValidationError("boundary tolerance must be >= 0");
  const std::size_t n = static_cast<std::size_t>(height) * width;
  if (pred_mask.size() != n || gt_mask.size() != n) throw ValidationError("boundary masks must be H x W");
  BoundaryScore score;
  std::vector<char> pred_used(n, 0), gt_used(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    score.pred_pixels += pred_mask[i] != 0;
    score.gt_pixels += gt_mask[i] != 0;
  }
  for (int dist = 0; dist <= tol; ++dist) {
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const std::size_t p = static_cast<std::size_t>(y) * width + x;
        if (!pred_mask[p] || pred_used[p]) continue;
        bool done = false;
        for (int dy = -dist; dy <= dist && !done; ++dy) {
          const int gy = y + dy;
          if (gy < 0 || gy >= height) continue;
          for (int dx = -dist; dx <= dist; ++dx) {
            if (std::max(std::abs(dy), std::abs(dx)) != dist) continue;
            const int gx = x + dx;
            if (gx < 0 || gx >= width) continue;
            const std::size_t g = static_cast<std::size_t>(gy) * width + gx;
            if (gt_mask[g] && !gt_used[g]) {
              pred_used[p] = gt_used[g] = 1;
              ++score.matched_pred;
              ++score.matched_gt;
              done = true;
              break;
            }
          }
        }
      }
    }
  }
  score.finalize();
  return score;
}

BoundaryScore boundary_prf(const LabelGrid& pred, const LabelGrid& gt, int tol) {
  check_pair(pred, gt, "boundary_prf");
  return match_boundaries(boundary_map(pred), boundary_map(gt), gt.height(), gt.width(), tol);
}

BoundaryScore boundary_prf_class(const LabelGrid& pred, const LabelGrid& gt, int tol, int cls) {
  check_pair(pred, gt, "boundary_prf_class");
  if (cls < 0 || cls >= gt.num_classes()) throw ValidationError("boundary_prf_class: unknown class");
  auto pb = boundary_map(pred);
  auto gb = boundary_map(gt);
  const auto pa = class_adjacent(pred, cls);
  const auto ga = class_adjacent(gt, cls);
  for (std::size_t i = 0; i < pb.size(); ++i) {
    pb[i] = pb[i] && pa[i];
    gb[i] = gb[i] && ga[i];
  }
  return match_boundaries(pb, gb, gt.height(), gt.width(), tol);
}

}  // namespace affield
