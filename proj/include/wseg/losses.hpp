#pragma once

// M-step objective pieces, each returning its value and the analytic
// gradient with respect to the logits:
//   soft cross-entropy  -sum_m sum_l t_m(l) log softmax(f_m)(l)
//   probabilistic IoU   mean_l  sum_m t q / sum_m (t + q - t q)
//   combined            CE - lambda * IoU
// Pixels flagged invalid in the target contribute neither loss nor gradient.

#include <functional>
#include <vector>

#include "wseg/core_types.hpp"

namespace wseg {

enum class PixelNorm { kSum, kMean };

struct LossConfig {
  double iou_weight = 1.0;  // lambda
  double div_epsilon = 1e-8;  // classes with IoU denominator below this are skipped
  PixelNorm normalization = PixelNorm::kMean;

  void check() const;
};

struct LossResult {
  double value = 0.0;
  std::vector<double> grad;  // d value / d f, laid out like LogitMap::values()
};

LossResult soft_cross_entropy(const ProbMap& target, const LogitMap& logits,
                              const LossConfig& cfg = {});

/// Value is the IoU gain in [0, 1]; grad is the gradient of the gain.
LossResult prob_iou_gain(const ProbMap& target, const LogitMap& logits,
                         const LossConfig& cfg = {});

/// CE - lambda * IoU gain (to be minimized).
LossResult combined_loss(const ProbMap& target, const LogitMap& logits,
                         const LossConfig& cfg = {});

using LossEvaluator = std::function<double(const LogitMap&)>;

/// Central differences (L(f + h e_i) - L(f - h e_i)) / 2h for every coordinate.
std::vector<double> finite_diff_grad(const LossEvaluator& loss, const LogitMap& logits,
                                     double h = 1e-4);

/// max_i |a_i - b_i| / max(1, |a_i|), with the index where it occurs.
struct GradientDiscrepancy {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
};
GradientDiscrepancy compare_gradients(const std::vector<double>& analytic,
                                      const std::vector<double>& numeric);

}  // namespace wseg
