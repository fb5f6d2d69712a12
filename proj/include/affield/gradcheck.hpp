#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace affield {

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate.
std::vector<double> central_differences(const std::function<double(std::span<const double>)>& f,
                                        std::vector<double> x, double step);

/// Per-coordinate steps, for inputs like probabilities near 0 where a fixed
/// step is dominated by truncation error.
std::vector<double> central_differences(const std::function<double(std::span<const double>)>& f,
                                        std::vector<double> x, std::span<const double> steps);

/// max_i |a_i - n_i| / max(|a_i|, |n_i|, floor). The floor keeps entries whose
/// true gradient is zero from dividing roundoff by roundoff.
double max_relative_error(std::span<const double> analytic, std::span<const double> numeric, double floor = 1e-6);

struct GradCheckCase {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
};

struct GradCheckOptions {
  std::uint64_t seed = 0;
  int instances = 20;
  int height = 8;
  int width = 8;
  int classes = 3;
  double step = 1e-5;
};

/// Checks unary_ce, affinity_loss (k = 3, 5), contrastive_loss,
/// multiscale_aaf (probabilities and weight logits), combined_objective
/// (logits) and combined_objective through the segmenter parameters on
/// seeded random instances. Instances within 1e-3 of a hinge kink or 1e-4 of
/// a ReLU kink are redrawn. Returns the worst error per case.
std::vector<GradCheckCase> run_gradcheck(const GradCheckOptions& options);

}  // namespace affield
