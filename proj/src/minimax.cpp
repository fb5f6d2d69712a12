#include "affield/minimax.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace affield {

namespace {

void softmax_rows(const std::vector<double>& logits, TermTable& out) {
  const int k = out.kernels;
  for (std::size_t row = 0; row * k < logits.size(); ++row) {
    const double* l = logits.data() + row * k;
    double* w = out.values.data() + row * k;
    const double mx = *std::max_element(l, l + k);
    double z = 0.0;
    for (int i = 0; i < k; ++i) z += (w[i] = std::exp(l[i] - mx));
    for (int i = 0; i < k; ++i) w[i] /= z;
  }
}

void check_shape(int classes, int kernels, std::size_t n) {
  if (classes <= 0 || kernels <= 0) throw ValidationError("SimplexWeights: classes and kernels must be positive");
  if (n != std::size_t(classes) * 2 * kernels) {
    throw ValidationError("SimplexWeights: expected " + std::to_string(std::size_t(classes) * 2 * kernels) +
                          " entries, got " + std::to_string(n));
  }
}

}  // namespace

const char* term_name(Term t) { return t == Term::Edge ? "edge" : "nonedge"; }

SimplexWeights SimplexWeights::uniform(int classes, int kernels, Parametrization p) {
  check_shape(classes, kernels, std::size_t(classes) * 2 * kernels);
  SimplexWeights w = from_logits(classes, kernels, std::vector<double>(std::size_t(classes) * 2 * kernels, 0.0));
  w.param_ = p;
  if (p == Parametrization::Projected) w.logits_.clear();
  return w;
}

SimplexWeights SimplexWeights::from_logits(int classes, int kernels, std::vector<double> logits) {
  check_shape(classes, kernels, logits.size());
  for (double l : logits) {
    if (!std::isfinite(l)) throw ValidationError("SimplexWeights: non-finite logit");
  }
  SimplexWeights w;
  w.param_ = Parametrization::SoftmaxLogits;
  w.table_ = TermTable(classes, kernels);
  w.logits_ = std::move(logits);
  softmax_rows(w.logits_, w.table_);
  return w;
}

SimplexWeights SimplexWeights::from_weights(int classes, int kernels, std::vector<double> weights) {
  check_shape(classes, kernels, weights.size());
  SimplexWeights w;
  w.param_ = Parametrization::Projected;
  w.table_ = TermTable(classes, kernels);
  w.table_.values = std::move(weights);
  for (double v : w.table_.values) {
    if (!(v >= -1e-12)) throw ValidationError("SimplexWeights: negative or non-finite weight");
  }
  if (w.simplex_error() > 1e-6) throw ValidationError("SimplexWeights: rows do not sum to 1 within 1e-6");
  return w;
}

double SimplexWeights::simplex_error() const {
  double worst = 0.0;
  const int k = table_.kernels;
  for (std::size_t row = 0; row * k < table_.values.size(); ++row) {
    const double s = std::accumulate(table_.values.begin() + row * k, table_.values.begin() + (row + 1) * k, 0.0);
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

void MinimaxConfig::validate() const {
  if (!(std::isfinite(w_lr) && w_lr > 0.0)) throw ValidationError("minimax.w_lr must be finite and > 0");
  if (alternating_n < 1) throw ValidationError("minimax.alternating_n must be >= 1");
}

TermTable softmax_logit_gradient(const SimplexWeights& w, const TermTable& grad_w) {
  TermTable out(w.classes(), w.kernels());
  const int k = w.kernels();
  const auto& wt = w.weights();
  for (std::size_t row = 0; row * k < wt.size(); ++row) {
    double mean = 0.0;
    for (int i = 0; i < k; ++i) mean += wt[row * k + i] * grad_w.values[row * k + i];
    for (int i = 0; i < k; ++i) out.values[row * k + i] = wt[row * k + i] * (grad_w.values[row * k + i] - mean);
  }
  return out;
}

std::vector<double> project_to_simplex(std::span<const double> v) {
  // Sort-based projection: find the threshold tau with sum max(v - tau, 0) = 1.
  std::vector<double> sorted(v.begin(), v.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumsum = 0.0;
  double tau = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    cumsum += sorted[i];
    const double t = (cumsum - 1.0) / static_cast<double>(i + 1);
    if (sorted[i] - t > 0.0) tau = t;
  }
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::max(v[i] - tau, 0.0);
  return out;
}

SimplexWeights ascend_weights(const SimplexWeights& w, const TermTable& grad_w, const MinimaxConfig& cfg) {
  cfg.validate();
  if (grad_w.classes != w.classes() || grad_w.kernels != w.kernels() || grad_w.values.size() != w.weights().size()) {
    throw ValidationError("ascend_weights: gradient shape does not match weights");
  }
  for (double g : grad_w.values) {
    if (!std::isfinite(g)) throw ValidationError("ascend_weights: non-finite gradient");
  }
  const double step = cfg.direction == WeightDirection::Ascent ? cfg.w_lr : -cfg.w_lr;

  if (w.parametrization() == Parametrization::SoftmaxLogits) {
    const TermTable g = softmax_logit_gradient(w, grad_w);
    std::vector<double> logits(w.logits().begin(), w.logits().end());
    for (std::size_t i = 0; i < logits.size(); ++i) logits[i] += step * g.values[i];
    return SimplexWeights::from_logits(w.classes(), w.kernels(), std::move(logits));
  }

  const int k = w.kernels();
  std::vector<double> next(w.weights().size());
  std::vector<double> row(k);
  for (std::size_t r = 0; r * k < next.size(); ++r) {
    for (int i = 0; i < k; ++i) row[i] = w.weights()[r * k + i] + step * grad_w.values[r * k + i];
    const auto projected = project_to_simplex(row);
    std::copy(projected.begin(), projected.end(), next.begin() + r * k);
  }
  return SimplexWeights::from_weights(w.classes(), w.kernels(), std::move(next));
}

double effective_kernel_size(const SimplexWeights& w, const KernelSpec& ks, int cls, Term term) {
  if (static_cast<int>(ks.size()) != w.kernels()) {
    throw ValidationError("effective_kernel_size: kernel spec does not match weights");
  }
  if (cls < 0 || cls >= w.classes()) throw ValidationError("effective_kernel_size: unknown class " + std::to_string(cls));
  double size = 0.0;
  for (int k = 0; k < w.kernels(); ++k) size += w.weight(cls, term, k) * ks[k];
  return size;
}

}  // namespace affield
