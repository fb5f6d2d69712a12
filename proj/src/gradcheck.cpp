#include "affield/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "affield/losses.hpp"
#include "affield/rng.hpp"
#include "affield/segmenter.hpp"

namespace affield {

namespace {

constexpr double kHingeGap = 1e-3;
constexpr double kReluGap = 1e-4;
// Probability steps are relative to min(p, 1 - p). A shift of this size moves
// any KL by about 1e-4, well inside kHingeGap.
constexpr double kProbStep = 1e-4;
// Losses are O(1) sums of thousands of pair terms, so central differences
// carry ~1e-10 absolute roundoff. Gradients below this floor are compared
// against it rather than against themselves.
constexpr double kGradFloor = 1e-5;

/// True when some pair's KL lies within kHingeGap of the margin for any k in ks.
bool near_affinity_kink(const ProbGrid& probs, const KernelSpec& ks, double margin, double eps) {
  const int h = probs.height(), w = probs.width();
  const int k = ks.largest() / 2;
  for (int c = 0; c < probs.num_classes(); ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        for (int dy = -k; dy <= k; ++dy) {
          for (int dx = -k; dx <= k; ++dx) {
            const int ny = y + dy, nx = x + dx;
            if (ny < 0 || ny >= h || nx < 0 || nx >= w || (dy == 0 && dx == 0)) continue;
            const double kl = kl_bernoulli(probs(std::size_t(ny) * w + nx, c), probs(std::size_t(y) * w + x, c), eps);
            if (std::abs(kl - margin) < kHingeGap) return true;
          }
        }
      }
    }
  }
  return false;
}

bool near_contrastive_kink(const EmbedGrid& emb, int k, double margin) {
  const int h = emb.height(), w = emb.width(), r = k / 2;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          const int ny = y + dy, nx = x + dx;
          if (ny < 0 || ny >= h || nx < 0 || nx >= w || (dy == 0 && dx == 0)) continue;
          const auto a = emb.vector(std::size_t(y) * w + x);
          const auto b = emb.vector(std::size_t(ny) * w + nx);
          double d2 = 0.0;
          for (int d = 0; d < emb.dim(); ++d) d2 += (a[d] - b[d]) * (a[d] - b[d]);
          if (std::abs(d2 - margin) < kHingeGap) return true;
        }
      }
    }
  }
  return false;
}

std::vector<double> normal_vector(Rng& rng, std::size_t n, double scale) {
  std::normal_distribution<double> dist(0.0, scale);
  std::vector<double> out(n);
  for (auto& v : out) v = dist(rng);
  return out;
}

LabelGrid random_labels(Rng& rng, int h, int w, int classes) {
  std::uniform_int_distribution<int> dist(0, classes - 1);
  std::vector<int> labels(static_cast<std::size_t>(h) * w);
  for (auto& l : labels) l = dist(rng);
  return LabelGrid(h, w, classes, std::move(labels));
}

}  // namespace

std::vector<double> central_differences(const std::function<double(std::span<const double>)>& f,
                                        std::vector<double> x, double step) {
  const std::vector<double> steps(x.size(), step);
  return central_differences(f, std::move(x), steps);
}

std::vector<double> central_differences(const std::function<double(std::span<const double>)>& f,
                                        std::vector<double> x, std::span<const double> steps) {
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double step = steps[i];
    const double saved = x[i];
    x[i] = saved + step;
    const double up = f(x);
    x[i] = saved - step;
    const double down = f(x);
    x[i] = saved;
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

double max_relative_error(std::span<const double> analytic, std::span<const double> numeric, double floor) {
  if (analytic.size() != numeric.size()) return INFINITY;
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double scale = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    const double err = std::abs(analytic[i] - numeric[i]) / scale;
    if (!std::isfinite(err)) return INFINITY;
    worst = std::max(worst, err);
  }
  return worst;
}

std::vector<GradCheckCase> run_gradcheck(const GradCheckOptions& opt) {
  const int h = opt.height, w = opt.width, classes = opt.classes;
  const std::size_t n = static_cast<std::size_t>(h) * w;
  const HyperParams hp;
  const KernelSpec ks({3, 5});
  constexpr int kEmbedDim = 4;

  std::vector<GradCheckCase> cases = {{"unary_ce/logits"},         {"affinity_loss(k=3)/probs"},
                                      {"affinity_loss(k=5)/probs"}, {"contrastive_loss/vectors"},
                                      {"multiscale_aaf/probs"},     {"multiscale_aaf/weight_logits"},
                                      {"combined_objective/logits"}, {"combined_objective/model_params"}};
  auto record = [&](std::size_t idx, std::span<const double> analytic, std::span<const double> numeric) {
    cases[idx].max_rel_error = std::max(cases[idx].max_rel_error, max_relative_error(analytic, numeric, kGradFloor));
    cases[idx].coordinates += analytic.size();
  };

  std::uint64_t draw = 0;
  for (int inst = 0; inst < opt.instances; ++inst) {
    // Loss-level instances.
    for (;;) {
      Rng rng(substream_seed(opt.seed, draw++));
      const auto logits = normal_vector(rng, n * classes, 1.5);
      const auto gt = random_labels(rng, h, w, classes);
      const auto raw_embed = normal_vector(rng, n * kEmbedDim, 1.0);
      const auto weight_logits = normal_vector(rng, std::size_t(classes) * 2 * ks.size(), 1.0);
      const auto probs = ProbGrid::from_logits(h, w, classes, logits);
      const EmbedGrid emb(DenseGrid(h, w, kEmbedDim, raw_embed));
      if (near_affinity_kink(probs, ks, hp.margin_m, hp.kl_eps) || near_contrastive_kink(emb, 3, hp.contrastive_m)) {
        continue;
      }
      const auto weights = SimplexWeights::from_logits(classes, static_cast<int>(ks.size()), weight_logits);
      const std::vector<double> p(probs.probs().begin(), probs.probs().end());
      std::vector<double> p_steps(p.size());
      for (std::size_t i = 0; i < p.size(); ++i) p_steps[i] = kProbStep * std::min(p[i], 1.0 - p[i]);

      const auto ce = unary_ce(probs, gt, hp.kl_eps);
      record(0, ce.grad, central_differences([&](std::span<const double> x) {
               return unary_ce(ProbGrid::from_logits(h, w, classes, x), gt, hp.kl_eps).value.total;
             }, logits, opt.step));

      for (int idx = 0; idx < 2; ++idx) {
        const int k = idx == 0 ? 3 : 5;
        const auto aff = affinity_loss(probs, gt, k, hp);
        record(1 + idx, aff.grad, central_differences([&](std::span<const double> x) {
                 return affinity_loss(ChannelProbs(h, w, classes, x), gt, k, hp).value.total;
               }, p, p_steps));
      }

      const auto con = contrastive_loss(emb, gt, 3, hp);
      record(3, con.grad, central_differences([&](std::span<const double> x) {
               return contrastive_loss(EmbedGrid(DenseGrid(h, w, kEmbedDim, {x.begin(), x.end()})), gt, 3, hp).value.total;
             }, raw_embed, opt.step));

      const auto aaf = multiscale_aaf(probs, gt, ks, weights, hp);
      record(4, aaf.prob_grad, central_differences([&](std::span<const double> x) {
               return multiscale_aaf(ChannelProbs(h, w, classes, x), gt, ks, weights, hp).value.total;
             }, p, p_steps));
      record(5, aaf.weight_logit_grad.values, central_differences([&](std::span<const double> x) {
               const auto wx = SimplexWeights::from_logits(classes, static_cast<int>(ks.size()), {x.begin(), x.end()});
               return multiscale_aaf(probs, gt, ks, wx, hp).value.total;
             }, weight_logits, opt.step));

      const auto obj = combined_objective(probs, gt, ks, weights, hp);
      record(6, obj.logit_grad, central_differences([&](std::span<const double> x) {
               return combined_objective(ProbGrid::from_logits(h, w, classes, x), gt, ks, weights, hp).total;
             }, logits, opt.step));
      break;
    }

    // End-to-end through the segmenter.
    for (;;) {
      Rng rng(substream_seed(opt.seed, draw++));
      const auto features = DenseGrid(h, w, 3, normal_vector(rng, n * 3, 1.0));
      const auto gt = random_labels(rng, h, w, classes);
      const auto weights = SimplexWeights::from_logits(classes, static_cast<int>(ks.size()),
                                                       normal_vector(rng, std::size_t(classes) * 2 * ks.size(), 1.0));
      const auto model = ToySegmenter::random(3, classes, rng());
      const auto pass = forward(model, features);
      const auto near_relu = [](const std::vector<double>& pre) {
        return std::any_of(pre.begin(), pre.end(), [](double v) { return std::abs(v) < kReluGap; });
      };
      if (near_relu(pass.pre1) || near_relu(pass.pre2) || near_affinity_kink(pass.probs, ks, hp.margin_m, hp.kl_eps)) {
        continue;
      }
      const auto obj = combined_objective(pass.probs, gt, ks, weights, hp);
      const auto grad = backward(model, features, pass, obj.logit_grad);
      const std::vector<double> params(model.params().begin(), model.params().end());
      record(7, grad, central_differences([&](std::span<const double> x) {
               ToySegmenter m = model;
               std::copy(x.begin(), x.end(), m.params().begin());
               return combined_objective(forward(m, features).probs, gt, ks, weights, hp).total;
             }, params, opt.step));
      break;
    }
  }
  return cases;
}

}  // namespace affield
