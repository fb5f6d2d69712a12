#include "affield/losses.hpp"

#include <algorithm>
#include <cmath>

#include "affield/parallel.hpp"

namespace affield {

namespace {

void check_same_shape(int h1, int w1, int h2, int w2, const char* what) {
  if (h1 != h2 || w1 != w2) {
    throw ValidationError(std::string(what) + ": grid shapes differ (" + std::to_string(h1) + "x" + std::to_string(w1) +
                          " vs " + std::to_string(h2) + "x" + std::to_string(w2) + ")");
  }
}

template <typename Grid>
void check_pred_gt(const Grid& pred, const LabelGrid& gt, const char* what) {
  check_same_shape(pred.height(), pred.width(), gt.height(), gt.width(), what);
  if (pred.num_classes() != gt.num_classes()) {
    throw ValidationError(std::string(what) + ": class counts differ (" + std::to_string(pred.num_classes()) + " vs " +
                          std::to_string(gt.num_classes()) + ")");
  }
}

/// Clamped probabilities and their logs for one class channel.
struct Channel {
  std::vector<double> p;
  std::vector<double> log_p;
  std::vector<double> log_q;  // log(1 - p)
  std::vector<double> live;   // 1 where the clamp is inactive, else 0
  std::vector<char> member;   // gt indicator for this class

  Channel(const ChannelProbs& pred, const LabelGrid& gt, int c, double eps) {
    const std::size_t n = pred.pixels();
    p.resize(n);
    log_p.resize(n);
    log_q.resize(n);
    live.resize(n);
    member.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double raw = pred(i, c);
      const double v = std::clamp(raw, eps, 1.0 - eps);
      p[i] = v;
      log_p[i] = std::log(v);
      log_q[i] = std::log1p(-v);
      live[i] = (raw >= eps && raw <= 1.0 - eps) ? 1.0 : 0.0;
      member[i] = gt.at(i) == c;
    }
  }
};

/// Sums and raw (unscaled) gradients of both terms for one channel and kernel.
struct TermSums {
  double sum[2] = {0.0, 0.0};
  std::int64_t count[2] = {0, 0};
  std::vector<double> grad[2];
};

TermSums channel_terms(const Channel& ch, int height, int width, int k, double margin) {
  TermSums out;
  const std::size_t n = ch.p.size();
  out.grad[0].assign(n, 0.0);
  out.grad[1].assign(n, 0.0);
  const int r = k / 2;
  for (int row = 0; row < height; ++row) {
    for (int col = 0; col < width; ++col) {
      const std::size_t i = static_cast<std::size_t>(row) * width + col;
      const int r0 = std::max(0, row - r), r1 = std::min(height - 1, row + r);
      const int c0 = std::max(0, col - r), c1 = std::min(width - 1, col + r);
      for (int nr = r0; nr <= r1; ++nr) {
        for (int nc = c0; nc <= c1; ++nc) {
          const std::size_t j = static_cast<std::size_t>(nr) * width + nc;
          if (j == i) continue;
          const double pj = ch.p[j], pi = ch.p[i];
          const double kl = pj * (ch.log_p[j] - ch.log_p[i]) + (1.0 - pj) * (ch.log_q[j] - ch.log_q[i]);
          const double dkl_dpj = (ch.log_p[j] - ch.log_p[i]) - (ch.log_q[j] - ch.log_q[i]);
          const double dkl_dpi = -pj / pi + (1.0 - pj) / (1.0 - pi);
          if (ch.member[i] == ch.member[j]) {
            out.sum[0] += kl;
            ++out.count[0];
            out.grad[0][j] += dkl_dpj * ch.live[j];
            out.grad[0][i] += dkl_dpi * ch.live[i];
          } else {
            ++out.count[1];
            if (kl < margin) {
              out.sum[1] += margin - kl;
              out.grad[1][j] -= dkl_dpj * ch.live[j];
              out.grad[1][i] -= dkl_dpi * ch.live[i];
            }
          }
        }
      }
    }
  }
  return out;
}

/// Shared core of affinity_loss and multiscale_aaf.
AafResult weighted_affinity(const ChannelProbs& pred, const LabelGrid& gt, const KernelSpec& ks,
                            const SimplexWeights& w, const HyperParams& hp) {
  const int classes = pred.num_classes();
  const int kernels = static_cast<int>(ks.size());
  const std::size_t n = pred.pixels();

  struct ClassBlock {
    std::vector<TermSums> per_kernel;
    std::vector<double> grad;
  };
  std::vector<ClassBlock> blocks(classes);

  parallel_for(static_cast<std::size_t>(classes), [&](std::size_t ci) {
    const int c = static_cast<int>(ci);
    const Channel ch(pred, gt, c, hp.kl_eps);
    auto& block = blocks[ci];
    block.grad.assign(n, 0.0);
    for (int kk = 0; kk < kernels; ++kk) {
      block.per_kernel.push_back(channel_terms(ch, pred.height(), pred.width(), ks[kk], hp.margin_m));
      const auto& terms = block.per_kernel.back();
      for (int t = 0; t < 2; ++t) {
        if (terms.count[t] == 0) continue;
        const double scale = w.weight(c, static_cast<Term>(t), kk) / (static_cast<double>(terms.count[t]) * classes);
        for (std::size_t i = 0; i < n; ++i) block.grad[i] += scale * terms.grad[t][i];
      }
    }
  });

  AafResult result;
  result.value.means = TermTable(classes, kernels);
  result.value.pair_counts.assign(result.value.means.values.size(), 0);
  result.weighted = TermTable(classes, 1);
  result.weight_grad = TermTable(classes, kernels);
  result.prob_grad.assign(n * classes, 0.0);

  double total = 0.0;
  for (int c = 0; c < classes; ++c) {
    for (int kk = 0; kk < kernels; ++kk) {
      const auto& terms = blocks[c].per_kernel[kk];
      for (int t = 0; t < 2; ++t) {
        const Term term = static_cast<Term>(t);
        const double mean = terms.count[t] > 0 ? terms.sum[t] / static_cast<double>(terms.count[t]) : 0.0;
        const auto idx = result.value.means.index(c, term, kk);
        result.value.means.values[idx] = mean;
        result.value.pair_counts[idx] = terms.count[t];
        result.weight_grad.values[idx] = mean / classes;
        result.weighted.at(c, term, 0) += w.weight(c, term, kk) * mean;
      }
    }
    total += result.weighted.at(c, Term::NonEdge, 0) + result.weighted.at(c, Term::Edge, 0);
    for (std::size_t i = 0; i < n; ++i) result.prob_grad[i * classes + c] = blocks[c].grad[i];
  }
  result.value.total = total / classes;
  result.weight_logit_grad = softmax_logit_gradient(w, result.weight_grad);
  return result;
}

}  // namespace

void HyperParams::validate() const {
  std::string errors;
  if (!(std::isfinite(lambda) && lambda >= 0.0)) errors += " hp.lambda must be >= 0;";
  if (!(std::isfinite(margin_m) && margin_m > 0.0)) errors += " hp.margin must be > 0;";
  if (!(std::isfinite(contrastive_m) && contrastive_m > 0.0)) errors += " hp.contrastive_margin must be > 0;";
  if (!(kl_eps > 0.0 && kl_eps <= 1e-3)) errors += " hp.kl_eps must be in (0, 1e-3];";
  if (!errors.empty()) throw ValidationError("invalid hyperparameters:" + errors);
}

double kl_bernoulli(double p, double q, double eps) {
  const double a = std::clamp(p, eps, 1.0 - eps);
  const double b = std::clamp(q, eps, 1.0 - eps);
  return a * std::log(a / b) + (1.0 - a) * std::log((1.0 - a) / (1.0 - b));
}

LossResult unary_ce(const ProbGrid& pred, const LabelGrid& gt, double eps) {
  check_pred_gt(pred, gt, "unary_ce");
  const int classes = pred.num_classes();
  const std::size_t n = pred.pixels();
  LossResult out;
  out.grad.assign(pred.probs().begin(), pred.probs().end());
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = gt.at(i);
    sum -= std::log(std::clamp(pred(i, label), eps, 1.0));
    out.grad[i * classes + label] -= 1.0;
  }
  for (auto& g : out.grad) g /= static_cast<double>(n);
  out.value.total = sum / static_cast<double>(n);
  return out;
}

ChannelProbs::ChannelProbs(int height, int width, int num_classes, std::span<const double> probs)
    : height_(height), width_(width), num_classes_(num_classes), probs_(probs) {
  if (height <= 0 || width <= 0 || num_classes <= 0) throw ValidationError("ChannelProbs: dimensions must be positive");
  if (probs.size() != pixels() * num_classes) throw ValidationError("ChannelProbs: payload size mismatch");
  for (double v : probs) {
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("ChannelProbs: probability outside [0, 1]");
  }
}

ChannelProbs::ChannelProbs(const ProbGrid& grid)
    : height_(grid.height()), width_(grid.width()), num_classes_(grid.num_classes()), probs_(grid.probs()) {}

LossResult affinity_loss(const ProbGrid& pred, const LabelGrid& gt, int k, const HyperParams& hp) {
  return affinity_loss(ChannelProbs(pred), gt, k, hp);
}

LossResult affinity_loss(const ChannelProbs& pred, const LabelGrid& gt, int k, const HyperParams& hp) {
  check_pred_gt(pred, gt, "affinity_loss");
  hp.validate();
  const KernelSpec ks({k});
  auto aaf = weighted_affinity(pred, gt, ks, SimplexWeights::uniform(pred.num_classes(), 1), hp);
  return LossResult{std::move(aaf.value), std::move(aaf.prob_grad)};
}

LossResult contrastive_loss(const EmbedGrid& emb, const LabelGrid& gt, int k, const HyperParams& hp) {
  check_same_shape(emb.height(), emb.width(), gt.height(), gt.width(), "contrastive_loss");
  check_kernel_size(k);
  hp.validate();
  const int h = emb.height(), w = emb.width(), dim = emb.dim();
  const std::size_t n = emb.pixels();
  const auto u = emb.vectors();

  std::vector<double> grad_u[2] = {std::vector<double>(n * dim, 0.0), std::vector<double>(n * dim, 0.0)};
  double sum[2] = {0.0, 0.0};
  std::int64_t count[2] = {0, 0};
  std::vector<double> diff(dim);
  const int r = k / 2;
  for (int row = 0; row < h; ++row) {
    for (int col = 0; col < w; ++col) {
      const std::size_t i = static_cast<std::size_t>(row) * w + col;
      for (int nr = std::max(0, row - r); nr <= std::min(h - 1, row + r); ++nr) {
        for (int nc = std::max(0, col - r); nc <= std::min(w - 1, col + r); ++nc) {
          const std::size_t j = static_cast<std::size_t>(nr) * w + nc;
          if (j == i) continue;
          double dist2 = 0.0;
          for (int d = 0; d < dim; ++d) {
            diff[d] = u[j * dim + d] - u[i * dim + d];
            dist2 += diff[d] * diff[d];
          }
          const int t = gt.at(i) == gt.at(j) ? 0 : 1;
          ++count[t];
          double sign = 1.0;
          if (t == 0) {
            sum[0] += dist2;
          } else if (dist2 < hp.contrastive_m) {
            sum[1] += hp.contrastive_m - dist2;
            sign = -1.0;
          } else {
            continue;
          }
          for (int d = 0; d < dim; ++d) {
            grad_u[t][j * dim + d] += sign * 2.0 * diff[d];
            grad_u[t][i * dim + d] -= sign * 2.0 * diff[d];
          }
        }
      }
    }
  }

  LossResult out;
  out.value.means = TermTable(1, 1);
  out.value.pair_counts.assign(2, 0);
  out.grad.assign(n * dim, 0.0);
  std::vector<double> gu(n * dim, 0.0);
  for (int t = 0; t < 2; ++t) {
    const double mean = count[t] > 0 ? sum[t] / static_cast<double>(count[t]) : 0.0;
    out.value.means.at(0, static_cast<Term>(t), 0) = mean;
    out.value.pair_counts[t] = count[t];
    out.value.total += mean;
    if (count[t] == 0) continue;
    for (std::size_t idx = 0; idx < gu.size(); ++idx) gu[idx] += grad_u[t][idx] / static_cast<double>(count[t]);
  }
  // Pull back through u = v / |v|: dL/dv = (g - u <u, g>) / |v|.
  for (std::size_t p = 0; p < n; ++p) {
    if (emb.norm(p) < EmbedGrid::kMinNorm) continue;
    double dot = 0.0;
    for (int d = 0; d < dim; ++d) dot += u[p * dim + d] * gu[p * dim + d];
    for (int d = 0; d < dim; ++d) out.grad[p * dim + d] = (gu[p * dim + d] - u[p * dim + d] * dot) / emb.norm(p);
  }
  return out;
}

AafResult multiscale_aaf(const ProbGrid& pred, const LabelGrid& gt, const KernelSpec& ks, const SimplexWeights& w,
                         const HyperParams& hp) {
  return multiscale_aaf(ChannelProbs(pred), gt, ks, w, hp);
}

AafResult multiscale_aaf(const ChannelProbs& pred, const LabelGrid& gt, const KernelSpec& ks, const SimplexWeights& w,
                         const HyperParams& hp) {
  check_pred_gt(pred, gt, "multiscale_aaf");
  hp.validate();
  if (w.classes() != pred.num_classes() || w.kernels() != static_cast<int>(ks.size())) {
    throw ValidationError("multiscale_aaf: weights cover " + std::to_string(w.classes()) + " classes x " +
                          std::to_string(w.kernels()) + " kernels, expected " + std::to_string(pred.num_classes()) +
                          " x " + std::to_string(ks.size()));
  }
  if (w.simplex_error() > 1e-6) throw ValidationError("multiscale_aaf: weights off the simplex");
  for (double v : w.weights()) {
    if (v < 0.0) throw ValidationError("multiscale_aaf: negative weight");
  }
  return weighted_affinity(pred, gt, ks, w, hp);
}

std::vector<double> softmax_backward(const ProbGrid& probs, std::span<const double> prob_grad) {
  const int classes = probs.num_classes();
  if (prob_grad.size() != probs.probs().size()) throw ValidationError("softmax_backward: gradient shape mismatch");
  std::vector<double> out(prob_grad.size());
  for (std::size_t p = 0; p < probs.pixels(); ++p) {
    double dot = 0.0;
    for (int c = 0; c < classes; ++c) dot += probs(p, c) * prob_grad[p * classes + c];
    for (int c = 0; c < classes; ++c) out[p * classes + c] = probs(p, c) * (prob_grad[p * classes + c] - dot);
  }
  return out;
}

ObjectiveResult combined_objective(const ProbGrid& pred, const LabelGrid& gt, const KernelSpec& ks,
                                   const SimplexWeights& w, const HyperParams& hp) {
  ObjectiveResult out;
  auto unary = unary_ce(pred, gt, hp.kl_eps);
  out.unary = std::move(unary.value);
  out.aaf = multiscale_aaf(pred, gt, ks, w, hp);
  out.total = out.unary.total + hp.lambda * out.aaf.value.total;

  std::vector<double> scaled(out.aaf.prob_grad.size());
  for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] = hp.lambda * out.aaf.prob_grad[i];
  out.logit_grad = softmax_backward(pred, scaled);
  for (std::size_t i = 0; i < out.logit_grad.size(); ++i) out.logit_grad[i] += unary.grad[i];

  out.weight_grad = out.aaf.weight_grad;
  for (auto& g : out.weight_grad.values) g *= hp.lambda;
  return out;
}

}  // namespace affield
