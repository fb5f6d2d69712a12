#include "affield/segmenter.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "affield/rng.hpp"
#include "affield/seggrid.hpp"

namespace affield {

namespace {

constexpr int H = ToySegmenter::kHidden;

/// 3x3 same-padded convolution; weights at w_base laid out [out][in][3][3].
void conv3x3(std::span<const double> in, int height, int width, int cin, std::span<const double> params,
             std::size_t w_base, std::size_t b_base, int cout, std::vector<double>& out) {
  out.assign(static_cast<std::size_t>(height) * width * cout, 0.0);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      double* o = out.data() + (static_cast<std::size_t>(r) * width + c) * cout;
      for (int oc = 0; oc < cout; ++oc) o[oc] = params[b_base + oc];
      for (int kr = 0; kr < 3; ++kr) {
        const int rr = r + kr - 1;
        if (rr < 0 || rr >= height) continue;
        for (int kc = 0; kc < 3; ++kc) {
          const int cc = c + kc - 1;
          if (cc < 0 || cc >= width) continue;
          const double* x = in.data() + (static_cast<std::size_t>(rr) * width + cc) * cin;
          for (int oc = 0; oc < cout; ++oc) {
            const double* wk = params.data() + w_base + (static_cast<std::size_t>(oc) * cin) * 9 + kr * 3 + kc;
            double acc = 0.0;
            for (int ic = 0; ic < cin; ++ic) acc += wk[ic * 9] * x[ic];
            o[oc] += acc;
          }
        }
      }
    }
  }
}

/// Accumulates dW, db into grad and returns dL/d(in).
std::vector<double> conv3x3_backward(std::span<const double> in, int height, int width, int cin,
                                     std::span<const double> params, std::size_t w_base, std::size_t b_base, int cout,
                                     std::span<const double> dout, std::vector<double>& grad, bool need_din) {
  std::vector<double> din(need_din ? in.size() : 0, 0.0);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const double* g = dout.data() + (static_cast<std::size_t>(r) * width + c) * cout;
      for (int oc = 0; oc < cout; ++oc) grad[b_base + oc] += g[oc];
      for (int kr = 0; kr < 3; ++kr) {
        const int rr = r + kr - 1;
        if (rr < 0 || rr >= height) continue;
        for (int kc = 0; kc < 3; ++kc) {
          const int cc = c + kc - 1;
          if (cc < 0 || cc >= width) continue;
          const std::size_t xi = (static_cast<std::size_t>(rr) * width + cc) * cin;
          for (int oc = 0; oc < cout; ++oc) {
            if (g[oc] == 0.0) continue;
            const std::size_t wk = w_base + (static_cast<std::size_t>(oc) * cin) * 9 + kr * 3 + kc;
            for (int ic = 0; ic < cin; ++ic) {
              grad[wk + ic * 9] += g[oc] * in[xi + ic];
              if (need_din) din[xi + ic] += g[oc] * params[wk + ic * 9];
            }
          }
        }
      }
    }
  }
  return din;
}

void check_input(const ToySegmenter& model, const FeatureMap& x) {
  if (x.channels() != model.in_channels()) {
    throw ValidationError("segmenter: input has " + std::to_string(x.channels()) + " channels, model expects " +
                          std::to_string(model.in_channels()));
  }
}

void put_u32(std::ostream& out, std::uint32_t v) {
  for (int s = 0; s < 32; s += 8) out.put(static_cast<char>((v >> s) & 0xff));
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() != 4) throw ValidationError("checkpoint: truncated file");
  return b[0] | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
}

}  // namespace

ToySegmenter::ToySegmenter(int in_channels, int classes) : in_channels_(in_channels), classes_(classes) {
  if (in_channels <= 0 || classes <= 0) throw ValidationError("ToySegmenter: channel counts must be positive");
  conv1_bias_ = static_cast<std::size_t>(H) * in_channels * 9;
  conv2_weight_ = conv1_bias_ + H;
  conv2_bias_ = conv2_weight_ + H * H * 9;
  head_weight_ = conv2_bias_ + H;
  head_bias_ = head_weight_ + static_cast<std::size_t>(classes) * H;
  params_.assign(head_bias_ + classes, 0.0);
}

ToySegmenter ToySegmenter::random(int in_channels, int classes, std::uint64_t seed) {
  ToySegmenter m(in_channels, classes);
  Rng rng(seed);
  auto fill = [&](std::size_t begin, std::size_t end, int fan_in) {
    const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-s, s);
    for (std::size_t i = begin; i < end; ++i) m.params_[i] = dist(rng);
  };
  fill(0, m.conv1_bias_, in_channels * 9);
  fill(m.conv2_weight_, m.conv2_bias_, H * 9);
  fill(m.head_weight_, m.head_bias_, H);
  return m;
}

ForwardPass forward(const ToySegmenter& model, const FeatureMap& x) {
  check_input(model, x);
  const int h = x.height(), w = x.width(), c = model.classes();
  const auto params = model.params();
  ForwardPass fp;
  conv3x3(x.values(), h, w, model.in_channels(), params, model.conv1_w(0, 0, 0, 0), model.conv1_b(0), H, fp.pre1);
  fp.act1 = fp.pre1;
  for (auto& v : fp.act1) v = std::max(v, 0.0);
  conv3x3(fp.act1, h, w, H, params, model.conv2_w(0, 0, 0, 0), model.conv2_b(0), H, fp.pre2);
  fp.act2 = fp.pre2;
  for (auto& v : fp.act2) v = std::max(v, 0.0);

  const std::size_t n = x.pixels();
  fp.logits.assign(n * c, 0.0);
  for (std::size_t p = 0; p < n; ++p) {
    for (int k = 0; k < c; ++k) {
      double acc = params[model.head_b(k)];
      for (int i = 0; i < H; ++i) acc += params[model.head_w(k, i)] * fp.act2[p * H + i];
      fp.logits[p * c + k] = acc;
    }
  }
  // Finite parameters can still overflow here once training diverges.
  for (double v : fp.logits) {
    if (!std::isfinite(v)) throw RuntimeFailure("forward: non-finite logits (training diverged?)");
  }
  for (double v : fp.act2) {
    if (!std::isfinite(v)) throw RuntimeFailure("forward: non-finite activations (training diverged?)");
  }
  fp.probs = ProbGrid::from_logits(h, w, c, fp.logits);
  fp.embed = EmbedGrid(DenseGrid(h, w, H, fp.act2));
  return fp;
}

std::vector<double> backward(const ToySegmenter& model, const FeatureMap& x, const ForwardPass& pass,
                             std::span<const double> logit_grad, std::span<const double> embed_grad) {
  check_input(model, x);
  const int h = x.height(), w = x.width(), c = model.classes();
  const std::size_t n = x.pixels();
  if (logit_grad.size() != n * c) throw ValidationError("backward: upstream gradient must be H x W x C");
  if (!embed_grad.empty() && embed_grad.size() != n * H) {
    throw ValidationError("backward: embedding gradient must be H x W x 8");
  }
  const auto params = model.params();
  std::vector<double> grad(model.param_count(), 0.0);

  std::vector<double> d2(n * H, 0.0);
  for (std::size_t p = 0; p < n; ++p) {
    for (int k = 0; k < c; ++k) {
      const double g = logit_grad[p * c + k];
      grad[model.head_b(k)] += g;
      for (int i = 0; i < H; ++i) {
        grad[model.head_w(k, i)] += g * pass.act2[p * H + i];
        d2[p * H + i] += g * params[model.head_w(k, i)];
      }
    }
  }
  for (std::size_t i = 0; i < d2.size(); ++i) {
    if (!embed_grad.empty()) d2[i] += embed_grad[i];
    if (pass.pre2[i] <= 0.0) d2[i] = 0.0;
  }
  auto d1 = conv3x3_backward(pass.act1, h, w, H, params, model.conv2_w(0, 0, 0, 0), model.conv2_b(0), H, d2, grad,
                             true);
  for (std::size_t i = 0; i < d1.size(); ++i) {
    if (pass.pre1[i] <= 0.0) d1[i] = 0.0;
  }
  conv3x3_backward(x.values(), h, w, model.in_channels(), params, model.conv1_w(0, 0, 0, 0), model.conv1_b(0), H, d1,
                   grad, false);
  return grad;
}

std::vector<double> backward(const ToySegmenter& model, const FeatureMap& x, std::span<const double> logit_grad) {
  return backward(model, x, forward(model, x), logit_grad);
}

LabelGrid predict(const ToySegmenter& model, const FeatureMap& x) {
  const auto fp = forward(model, x);
  return argmax(x.height(), x.width(), model.classes(), fp.logits);
}

void save_checkpoint(const ToySegmenter& model, const std::filesystem::path& path) {
  std::ostringstream out(std::ios::binary);
  out.write("TSEG", 4);
  put_u32(out, 1);
  put_u32(out, static_cast<std::uint32_t>(model.in_channels()));
  put_u32(out, static_cast<std::uint32_t>(ToySegmenter::kHidden));
  put_u32(out, static_cast<std::uint32_t>(model.classes()));
  put_u32(out, static_cast<std::uint32_t>(model.param_count()));
  for (double v : model.params()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  write_file_atomic(path, out.str());
}

ToySegmenter load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::string(magic, 4) != "TSEG") throw ValidationError(path.string() + ": bad magic");
  if (get_u32(in) != 1) throw ValidationError(path.string() + ": unsupported checkpoint version");
  const auto in_ch = get_u32(in);
  const auto hidden = get_u32(in);
  const auto classes = get_u32(in);
  const auto count = get_u32(in);
  if (hidden != ToySegmenter::kHidden || in_ch == 0 || in_ch > 4096 || classes == 0 || classes > 65536) {
    throw ValidationError(path.string() + ": unsupported layer dimensions");
  }
  ToySegmenter model(static_cast<int>(in_ch), static_cast<int>(classes));
  if (count != model.param_count()) throw ValidationError(path.string() + ": parameter count mismatch");
  for (auto& v : model.params()) v = static_cast<double>(std::bit_cast<float>(get_u32(in)));
  if (in.peek() != std::char_traits<char>::eof()) throw ValidationError(path.string() + ": trailing bytes");
  return model;
}

std::string to_string(LossMode mode) {
  switch (mode) {
    case LossMode::Unary: return "unary";
    case LossMode::Affinity: return "affinity";
    case LossMode::Aaf: return "aaf";
    case LossMode::Contrastive: return "contrastive";
  }
  return "unknown";
}

LossMode parse_loss_mode(const std::string& text) {
  if (text == "unary") return LossMode::Unary;
  if (text == "affinity" || text == "unary+affinity") return LossMode::Affinity;
  if (text == "aaf" || text == "unary+aaf") return LossMode::Aaf;
  if (text == "contrastive" || text == "unary+contrastive") return LossMode::Contrastive;
  throw ValidationError("unknown loss mode '" + text + "' (expected unary, affinity, aaf, contrastive)");
}

void TrainConfig::validate() const {
  std::string errors;
  if (!(std::isfinite(base_lr) && base_lr > 0.0)) errors += " train.base_lr must be > 0;";
  if (iters < 0) errors += " train.iters must be >= 0;";
  if (!(std::isfinite(poly_power) && poly_power >= 0.0)) errors += " train.poly_power must be >= 0;";
  if (!(momentum >= 0.0 && momentum < 1.0)) errors += " train.momentum must be in [0, 1);";
  if (!(std::isfinite(weight_decay) && weight_decay >= 0.0)) errors += " train.weight_decay must be >= 0;";
  if (affinity_k < 3 || affinity_k % 2 == 0) errors += " loss.affinity_k must be odd and >= 3;";
  if (log_every < 1) errors += " train.log_every must be >= 1;";
  if (!errors.empty()) throw ValidationError("invalid training config:" + errors);
}

double poly_lr(double base_lr, int iter, int max_iter, double power) {
  if (max_iter <= 0 || iter >= max_iter) return 0.0;
  return base_lr * std::pow(1.0 - static_cast<double>(iter) / max_iter, power);
}

TrainResult train(ToySegmenter model, std::span<const Scene> data, const TrainConfig& cfg, const KernelSpec& ks,
                  const HyperParams& hp, const MinimaxConfig& mm) {
  cfg.validate();
  hp.validate();
  mm.validate();
  if (data.empty()) throw ValidationError("train: dataset is empty");

  TrainResult result;
  const int classes = model.classes();
  const KernelSpec single({cfg.affinity_k});
  std::optional<SimplexWeights> weights;
  if (cfg.loss_mode == LossMode::Aaf) weights = SimplexWeights::uniform(classes, static_cast<int>(ks.size()), mm.parametrization);
  const SimplexWeights single_weights = SimplexWeights::uniform(classes, 1);

  std::vector<double> velocity(model.param_count(), 0.0);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(cfg.seed);
  std::size_t cursor = order.size();

  result.curve.total.reserve(cfg.iters);
  for (int iter = 0; iter < cfg.iters; ++iter) {
    if (cursor == order.size()) {
      std::shuffle(order.begin(), order.end(), shuffle_rng);
      cursor = 0;
    }
    const Scene& scene = data[order[cursor++]];
    if (scene.gt.num_classes() != classes) throw ValidationError("train: scene class count does not match model");
    const auto pass = forward(model, scene.features);

    double total = 0.0, unary_value = 0.0, region = 0.0;
    std::vector<double> logit_grad;
    std::vector<double> embed_grad;
    std::optional<TermTable> weight_grad;
    switch (cfg.loss_mode) {
      case LossMode::Unary: {
        auto u = unary_ce(pass.probs, scene.gt, hp.kl_eps);
        total = unary_value = u.value.total;
        logit_grad = std::move(u.grad);
        break;
      }
      case LossMode::Affinity:
      case LossMode::Aaf: {
        const bool adaptive = cfg.loss_mode == LossMode::Aaf;
        auto obj = combined_objective(pass.probs, scene.gt, adaptive ? ks : single, adaptive ? *weights : single_weights,
                                      hp);
        total = obj.total;
        unary_value = obj.unary.total;
        region = obj.aaf.value.total;
        logit_grad = std::move(obj.logit_grad);
        if (adaptive) weight_grad = std::move(obj.weight_grad);
        break;
      }
      case LossMode::Contrastive: {
        auto u = unary_ce(pass.probs, scene.gt, hp.kl_eps);
        auto con = contrastive_loss(pass.embed, scene.gt, cfg.affinity_k, hp);
        unary_value = u.value.total;
        region = con.value.total;
        total = unary_value + hp.lambda * region;
        logit_grad = std::move(u.grad);
        embed_grad = std::move(con.grad);
        for (auto& g : embed_grad) g *= hp.lambda;
        break;
      }
    }
    if (!std::isfinite(total)) {
      throw RuntimeFailure("training diverged at iteration " + std::to_string(iter) + " (loss " +
                           std::to_string(total) + ")");
    }
    result.curve.total.push_back(total);
    result.curve.unary.push_back(unary_value);
    result.curve.region.push_back(region);

    const auto grad = backward(model, scene.features, pass, logit_grad, embed_grad);
    const double lr = poly_lr(cfg.base_lr, iter, cfg.iters, cfg.poly_power);
    auto params = model.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
      velocity[i] = cfg.momentum * velocity[i] + lr * (grad[i] + cfg.weight_decay * params[i]);
      params[i] -= velocity[i];
      if (!std::isfinite(params[i])) {
        throw RuntimeFailure("training diverged at iteration " + std::to_string(iter) + " (non-finite parameter)");
      }
    }

    if (weight_grad) {
      const bool update = mm.scheme == UpdateScheme::Simultaneous || (iter + 1) % mm.alternating_n == 0;
      if (update) weights = ascend_weights(*weights, *weight_grad, mm);
      if (iter % cfg.log_every == 0 || iter + 1 == cfg.iters) {
        result.weight_trajectory.push_back({iter, std::vector<double>(weights->weights().begin(), weights->weights().end())});
      }
    }
  }
  result.model = std::move(model);
  result.final_weights = std::move(weights);
  return result;
}

}  // namespace affield
