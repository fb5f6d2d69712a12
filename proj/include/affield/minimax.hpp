#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "affield/grid.hpp"

namespace affield {

enum class Term : int { NonEdge = 0, Edge = 1 };

const char* term_name(Term t);

/// Values indexed by (class, term, kernel), kernel fastest.
struct TermTable {
  int classes = 0;
  int kernels = 0;
  std::vector<double> values;

  TermTable() = default;
  TermTable(int classes, int kernels) : classes(classes), kernels(kernels), values(std::size_t(classes) * 2 * kernels) {}

  std::size_t index(int c, Term t, int k) const {
    return (static_cast<std::size_t>(c) * 2 + static_cast<int>(t)) * kernels + k;
  }
  double& at(int c, Term t, int k) { return values[index(c, t, k)]; }
  double at(int c, Term t, int k) const { return values[index(c, t, k)]; }

  bool operator==(const TermTable&) const = default;
};

enum class Parametrization { SoftmaxLogits, Projected };
enum class UpdateScheme { Simultaneous, Alternating };
enum class WeightDirection { Ascent, Descent };

/// Per-(class, term) kernel-size weights, each row on the probability simplex.
///
/// Under SoftmaxLogits the weights are softmax(logits) per row and stay
/// strictly positive; under Projected the weights are stored directly and
/// the logits are unused.
class SimplexWeights {
 public:
  SimplexWeights() = default;

  static SimplexWeights uniform(int classes, int kernels, Parametrization p = Parametrization::SoftmaxLogits);
  static SimplexWeights from_logits(int classes, int kernels, std::vector<double> logits);
  /// Projected parametrization; rows must already lie on the simplex within 1e-6.
  static SimplexWeights from_weights(int classes, int kernels, std::vector<double> weights);

  int classes() const noexcept { return table_.classes; }
  int kernels() const noexcept { return table_.kernels; }
  Parametrization parametrization() const noexcept { return param_; }

  double weight(int c, Term t, int k) const { return table_.at(c, t, k); }
  const TermTable& table() const noexcept { return table_; }
  std::span<const double> weights() const noexcept { return table_.values; }
  std::span<const double> logits() const noexcept { return logits_; }

  /// Largest deviation of any row sum from one.
  double simplex_error() const;

  bool operator==(const SimplexWeights&) const = default;

 private:
  Parametrization param_ = Parametrization::SoftmaxLogits;
  TermTable table_;
  std::vector<double> logits_;
};

struct MinimaxConfig {
  double w_lr = 0.01;
  UpdateScheme scheme = UpdateScheme::Simultaneous;
  int alternating_n = 1;
  Parametrization parametrization = Parametrization::SoftmaxLogits;
  /// Descent turns the max-player into a minimizer (trivial-solution probe).
  WeightDirection direction = WeightDirection::Ascent;

  void validate() const;
};

/// Chains dL/dw through the row-wise softmax: dL/dlogit_k = w_k (g_k - <w, g>).
TermTable softmax_logit_gradient(const SimplexWeights& w, const TermTable& grad_w);

/// Euclidean projection of `v` onto the probability simplex.
std::vector<double> project_to_simplex(std::span<const double> v);

/// One step of the weight player. `grad_w` is dL/dw (not logits).
/// Throws ValidationError on shape mismatch or non-finite gradient; `w` is
/// never modified.
SimplexWeights ascend_weights(const SimplexWeights& w, const TermTable& grad_w, const MinimaxConfig& cfg);

/// Weighted mean kernel size sum_k w(c, term, k) * k.
double effective_kernel_size(const SimplexWeights& w, const KernelSpec& ks, int cls, Term term);

}  // namespace affield
