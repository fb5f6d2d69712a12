#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "affield/grid.hpp"
#include "affield/losses.hpp"
#include "affield/minimax.hpp"

namespace affield {

/// One training or evaluation example.
struct Scene {
  LabelGrid gt;
  FeatureMap features;
};

/// conv3x3(F_in -> 8) + ReLU, conv3x3(8 -> 8) + ReLU, conv1x1(8 -> C).
/// Zero padding keeps H x W. All parameters live in one flat vector:
///
///   conv1 weights [8][F_in][3][3], conv1 bias [8],
///   conv2 weights [8][8][3][3],    conv2 bias [8],
///   head weights  [C][8],          head bias  [C]
class ToySegmenter {
 public:
  static constexpr int kHidden = 8;

  ToySegmenter() = default;
  /// All parameters zero.
  ToySegmenter(int in_channels, int classes);
  /// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights, zero biases.
  static ToySegmenter random(int in_channels, int classes, std::uint64_t seed);

  int in_channels() const noexcept { return in_channels_; }
  int classes() const noexcept { return classes_; }

  std::span<double> params() noexcept { return params_; }
  std::span<const double> params() const noexcept { return params_; }
  std::size_t param_count() const noexcept { return params_.size(); }

  std::size_t conv1_w(int out, int in, int kr, int kc) const { return ((out * in_channels_ + in) * 3 + kr) * 3 + kc; }
  std::size_t conv1_b(int out) const { return conv1_bias_ + out; }
  std::size_t conv2_w(int out, int in, int kr, int kc) const {
    return conv2_weight_ + ((out * kHidden + in) * 3 + kr) * 3 + kc;
  }
  std::size_t conv2_b(int out) const { return conv2_bias_ + out; }
  std::size_t head_w(int cls, int in) const { return head_weight_ + cls * kHidden + in; }
  std::size_t head_b(int cls) const { return head_bias_ + cls; }

  bool operator==(const ToySegmenter&) const = default;

 private:
  int in_channels_ = 0;
  int classes_ = 0;
  std::size_t conv1_bias_ = 0, conv2_weight_ = 0, conv2_bias_ = 0, head_weight_ = 0, head_bias_ = 0;
  std::vector<double> params_;
};

/// Activations of one forward pass, kept for backward. Layout H x W x channels.
struct ForwardPass {
  std::vector<double> pre1, act1, pre2, act2, logits;
  ProbGrid probs;
  EmbedGrid embed;  ///< normalized act2
};

ForwardPass forward(const ToySegmenter& model, const FeatureMap& x);

/// Parameter gradients for upstream dL/dlogits and, optionally, dL/d(act2)
/// (the pre-normalization embedding).
std::vector<double> backward(const ToySegmenter& model, const FeatureMap& x, const ForwardPass& pass,
                             std::span<const double> logit_grad, std::span<const double> embed_grad = {});

std::vector<double> backward(const ToySegmenter& model, const FeatureMap& x, std::span<const double> logit_grad);

LabelGrid predict(const ToySegmenter& model, const FeatureMap& x);

// Checkpoint layout (little-endian): "TSEG", u32 version (1), u32 in_channels,
// u32 hidden, u32 classes, u32 parameter count, f32 parameters in flat order.
void save_checkpoint(const ToySegmenter& model, const std::filesystem::path& path);
ToySegmenter load_checkpoint(const std::filesystem::path& path);

enum class LossMode { Unary, Affinity, Aaf, Contrastive };

std::string to_string(LossMode mode);
LossMode parse_loss_mode(const std::string& text);

struct TrainConfig {
  double base_lr = 0.001;
  int iters = 30000;
  double poly_power = 0.9;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::uint64_t seed = 0;  ///< shuffle order
  LossMode loss_mode = LossMode::Unary;
  int affinity_k = 3;      ///< kernel of the single-kernel affinity and contrastive modes
  int log_every = 10;      ///< weight trajectory sampling period

  void validate() const;
};

/// base_lr * (1 - iter / max_iter)^power.
double poly_lr(double base_lr, int iter, int max_iter, double power);

struct LossCurve {
  std::vector<double> total, unary, region;
  bool operator==(const LossCurve&) const = default;
};

struct WeightSnapshot {
  int iter = 0;
  std::vector<double> weights;
  bool operator==(const WeightSnapshot&) const = default;
};

struct TrainResult {
  ToySegmenter model;
  std::optional<SimplexWeights> final_weights;  ///< set in aaf mode only
  std::vector<WeightSnapshot> weight_trajectory;
  LossCurve curve;
};

/// SGD with momentum and poly learning rate on the segmenter; in aaf mode the
/// kernel weights take a `minimax` step after each segmenter step (or every
/// alternating_n steps). One scene per step, reshuffled each epoch.
/// Throws RuntimeFailure when the loss becomes non-finite.
TrainResult train(ToySegmenter model, std::span<const Scene> data, const TrainConfig& cfg, const KernelSpec& ks,
                  const HyperParams& hp, const MinimaxConfig& mm);

}  // namespace affield
