#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "affield/grid.hpp"
#include "affield/minimax.hpp"

namespace affield {

struct HyperParams {
  double lambda = 1.0;          ///< balance of the region loss against the unary loss
  double margin_m = 3.0;        ///< hinge margin of the boundary term, in nats
  double contrastive_m = 0.2;   ///< hinge margin on squared embedding distance
  double kl_eps = 1e-6;         ///< probability clamp inside the KL divergence

  void validate() const;
};

/// Loss value plus its per-(class, term, kernel) breakdown. For the single
/// kernel losses the table has one kernel column; for unary CE it is empty.
struct LossValue {
  double total = 0.0;
  TermTable means;
  std::vector<std::int64_t> pair_counts;  ///< same layout as `means`
};

struct LossResult {
  LossValue value;
  /// dL/d(input): probabilities (affinity), logits (unary CE), or
  /// pre-normalization vectors (contrastive). Same layout as the input.
  std::vector<double> grad;
};

struct AafResult {
  LossValue value;                 ///< total = L_AAF; means hold every kernel column
  TermTable weighted;              ///< per-(class, term) sum_k w * mean, one column
  std::vector<double> prob_grad;   ///< dL_AAF / d probs
  TermTable weight_grad;           ///< dL_AAF / d w
  TermTable weight_logit_grad;     ///< dL_AAF / d logits (softmax parametrization)
};

struct ObjectiveResult {
  double total = 0.0;
  LossValue unary;
  AafResult aaf;
  std::vector<double> logit_grad;  ///< d total / d logits, softmax Jacobian applied
  TermTable weight_grad;           ///< d total / d w (lambda-scaled)
};

/// Read-only H x W x C view of per-channel probabilities. Unlike ProbGrid the
/// rows need not sum to one: the affinity losses treat every class channel as
/// an independent Bernoulli parameter.
class ChannelProbs {
 public:
  ChannelProbs(int height, int width, int num_classes, std::span<const double> probs);
  ChannelProbs(const ProbGrid& grid);  // NOLINT(google-explicit-constructor)

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int num_classes() const noexcept { return num_classes_; }
  std::size_t pixels() const noexcept { return static_cast<std::size_t>(height_) * width_; }
  double operator()(std::size_t pixel, int cls) const { return probs_[pixel * num_classes_ + cls]; }

 private:
  int height_, width_, num_classes_;
  std::span<const double> probs_;
};

/// Bernoulli KL divergence D(p || q) in nats with both arguments clamped to [eps, 1 - eps].
double kl_bernoulli(double p, double q, double eps);

/// Mean pixel cross-entropy. Gradient is with respect to pre-softmax logits.
LossResult unary_ce(const ProbGrid& pred, const LabelGrid& gt, double eps = 1e-6);

/// Affinity field loss over every ordered pair in the k x k window.
///
/// In class channel c, a pair (i, j) with equal indicators [gt_i == c] and
/// [gt_j == c] adds D(p_j(c) || p_i(c)) to the non-edge term; otherwise it adds
/// max(0, m - D(p_j(c) || p_i(c))) to the edge term. Each (c, term) is averaged
/// over its own pair count and total = mean_c(edge + non-edge).
LossResult affinity_loss(const ProbGrid& pred, const LabelGrid& gt, int k, const HyperParams& hp);
LossResult affinity_loss(const ChannelProbs& pred, const LabelGrid& gt, int k, const HyperParams& hp);

/// Contrastive pairwise loss on normalized embeddings, with same/different
/// decided by label equality. One row in the table; total = same + different.
LossResult contrastive_loss(const EmbedGrid& emb, const LabelGrid& gt, int k, const HyperParams& hp);

/// Weighted multi-kernel affinity loss:
///   L_AAF = (1/C) sum_c sum_k (w(c,nonedge,k) L(c,nonedge,k) + w(c,edge,k) L(c,edge,k)).
AafResult multiscale_aaf(const ProbGrid& pred, const LabelGrid& gt, const KernelSpec& ks, const SimplexWeights& w,
                         const HyperParams& hp);
AafResult multiscale_aaf(const ChannelProbs& pred, const LabelGrid& gt, const KernelSpec& ks, const SimplexWeights& w,
                         const HyperParams& hp);

/// unary CE + lambda * L_AAF, with gradients for both players.
ObjectiveResult combined_objective(const ProbGrid& pred, const LabelGrid& gt, const KernelSpec& ks,
                                   const SimplexWeights& w, const HyperParams& hp);

/// Pulls a gradient over probabilities back through the row-wise softmax.
std::vector<double> softmax_backward(const ProbGrid& probs, std::span<const double> prob_grad);

}  // namespace affield
