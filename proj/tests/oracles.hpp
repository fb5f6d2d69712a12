#pragma once

// Brute-force reference implementations. They share no code with the library
// beyond the data types and make_pairs, so disagreement points at the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "affield/grid.hpp"
#include "affield/losses.hpp"
#include "affield/minimax.hpp"
#include "affield/segmenter.hpp"

namespace oracle {

using namespace affield;

inline double kl(double p, double q, double eps) {
  p = std::clamp(p, eps, 1.0 - eps);
  q = std::clamp(q, eps, 1.0 - eps);
  return p * std::log(p / q) + (1.0 - p) * std::log((1.0 - p) / (1.0 - q));
}

struct AffinityTerms {
  std::vector<double> nonedge_mean, edge_mean;  // per class
  std::vector<std::int64_t> nonedge_count, edge_count;
  double total = 0.0;
};

inline AffinityTerms affinity(const ChannelProbs& p, const LabelGrid& gt, int k, const HyperParams& hp) {
  const int C = p.num_classes();
  AffinityTerms out;
  out.nonedge_mean.assign(C, 0.0);
  out.edge_mean.assign(C, 0.0);
  out.nonedge_count.assign(C, 0);
  out.edge_count.assign(C, 0);
  const PairSet ps = make_pairs(p.height(), p.width(), k);
  for (int c = 0; c < C; ++c) {
    for (const auto& pr : ps.pairs) {
      const bool in_i = gt.at(pr.center) == c;
      const bool in_j = gt.at(pr.neighbor) == c;
      const double d = kl(p(pr.neighbor, c), p(pr.center, c), hp.kl_eps);
      if (in_i == in_j) {
        out.nonedge_mean[c] += d;
        ++out.nonedge_count[c];
      } else {
        out.edge_mean[c] += std::max(0.0, hp.margin_m - d);
        ++out.edge_count[c];
      }
    }
    if (out.nonedge_count[c] > 0) out.nonedge_mean[c] /= static_cast<double>(out.nonedge_count[c]);
    if (out.edge_count[c] > 0) out.edge_mean[c] /= static_cast<double>(out.edge_count[c]);
    out.total += out.nonedge_mean[c] + out.edge_mean[c];
  }
  out.total /= C;
  return out;
}

/// Same-label pairs add |u_i - u_j|^2, others max(0, m - |u_i - u_j|^2); each side averaged.
inline double contrastive(const EmbedGrid& e, const LabelGrid& gt, int k, const HyperParams& hp) {
  const PairSet ps = make_pairs(e.height(), e.width(), k);
  double sum[2] = {0, 0};
  std::int64_t count[2] = {0, 0};
  for (const auto& pr : ps.pairs) {
    const auto a = e.vector(pr.center);
    const auto b = e.vector(pr.neighbor);
    double d2 = 0.0;
    for (int i = 0; i < e.dim(); ++i) d2 += (a[i] - b[i]) * (a[i] - b[i]);
    if (gt.at(pr.center) == gt.at(pr.neighbor)) {
      sum[0] += d2;
      ++count[0];
    } else {
      sum[1] += std::max(0.0, hp.contrastive_m - d2);
      ++count[1];
    }
  }
  double total = 0.0;
  for (int t = 0; t < 2; ++t) {
    if (count[t] > 0) total += sum[t] / static_cast<double>(count[t]);
  }
  return total;
}

inline double unary_ce(const ProbGrid& p, const LabelGrid& gt, double eps) {
  double s = 0.0;
  for (std::size_t i = 0; i < gt.pixels(); ++i) s -= std::log(std::max(p(i, gt.at(i)), eps));
  return s / static_cast<double>(gt.pixels());
}

/// Weighted recombination of single-kernel oracle terms.
inline double multiscale(const ChannelProbs& p, const LabelGrid& gt, const KernelSpec& ks, const SimplexWeights& w,
                         const HyperParams& hp) {
  const int C = p.num_classes();
  double total = 0.0;
  for (std::size_t k = 0; k < ks.size(); ++k) {
    const auto t = affinity(p, gt, ks[k], hp);
    for (int c = 0; c < C; ++c) {
      total += w.weight(c, Term::NonEdge, static_cast<int>(k)) * t.nonedge_mean[c] +
               w.weight(c, Term::Edge, static_cast<int>(k)) * t.edge_mean[c];
    }
  }
  return total / C;
}

/// Nested-loop zero-padded 3x3 convolution; `in` and the result are H x W x channels.
inline std::vector<double> conv3x3(const std::vector<double>& in, int h, int w, int cin, int cout,
                                   const std::vector<double>& weight, const std::vector<double>& bias) {
  std::vector<double> out(static_cast<std::size_t>(h) * w * cout);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int o = 0; o < cout; ++o) {
        double s = bias[o];
        for (int i = 0; i < cin; ++i)
          for (int kr = 0; kr < 3; ++kr)
            for (int kc = 0; kc < 3; ++kc) {
              const int yy = y + kr - 1, xx = x + kc - 1;
              if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
              s += weight[((o * cin + i) * 3 + kr) * 3 + kc] * in[(static_cast<std::size_t>(yy) * w + xx) * cin + i];
            }
        out[(static_cast<std::size_t>(y) * w + x) * cout + o] = s;
      }
  return out;
}

/// Logits of the toy segmenter, recomputed layer by layer from the parameter accessors.
inline std::vector<double> segmenter_logits(const ToySegmenter& m, const FeatureMap& x) {
  const int h = x.height(), w = x.width(), F = m.in_channels(), H = ToySegmenter::kHidden, C = m.classes();
  const auto p = m.params();
  std::vector<double> w1, b1, w2, b2;
  for (int o = 0; o < H; ++o) {
    for (int i = 0; i < F; ++i)
      for (int kr = 0; kr < 3; ++kr)
        for (int kc = 0; kc < 3; ++kc) w1.push_back(p[m.conv1_w(o, i, kr, kc)]);
    b1.push_back(p[m.conv1_b(o)]);
  }
  for (int o = 0; o < H; ++o) {
    for (int i = 0; i < H; ++i)
      for (int kr = 0; kr < 3; ++kr)
        for (int kc = 0; kc < 3; ++kc) w2.push_back(p[m.conv2_w(o, i, kr, kc)]);
    b2.push_back(p[m.conv2_b(o)]);
  }
  std::vector<double> in(x.values().begin(), x.values().end());
  auto a1 = conv3x3(in, h, w, F, H, w1, b1);
  for (auto& v : a1) v = std::max(0.0, v);
  auto a2 = conv3x3(a1, h, w, H, H, w2, b2);
  for (auto& v : a2) v = std::max(0.0, v);
  std::vector<double> logits(static_cast<std::size_t>(h) * w * C);
  for (std::size_t px = 0; px < static_cast<std::size_t>(h) * w; ++px)
    for (int c = 0; c < C; ++c) {
      double s = p[m.head_b(c)];
      for (int i = 0; i < H; ++i) s += p[m.head_w(c, i)] * a2[px * H + i];
      logits[px * C + c] = s;
    }
  return logits;
}

// Random instances.

inline std::vector<double> normals(std::mt19937_64& rng, std::size_t n, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

inline LabelGrid random_labels(std::mt19937_64& rng, int h, int w, int C) {
  std::uniform_int_distribution<int> d(0, C - 1);
  std::vector<int> l(static_cast<std::size_t>(h) * w);
  for (auto& x : l) x = d(rng);
  return LabelGrid(h, w, C, std::move(l));
}

inline ProbGrid random_probs(std::mt19937_64& rng, int h, int w, int C, double scale = 1.5) {
  return ProbGrid::from_logits(h, w, C, normals(rng, static_cast<std::size_t>(h) * w * C, scale));
}

}  // namespace oracle
