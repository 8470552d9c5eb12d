#include "wseg/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace wseg {

namespace {

void check_shapes(const ProbMap& target, const LogitMap& logits, const char* who) {
  if (target.dims() != logits.dims() || target.num_labels() != logits.num_labels()) {
    throw DomainError(std::string(who) + ": target and logits have different shapes");
  }
}

// Softmax of every pixel, at 64-bit precision.
std::vector<double> softmax_all(const LogitMap& logits) {
  const std::size_t n = logits.dims().pixels();
  const auto num_labels = static_cast<std::size_t>(logits.num_labels());
  std::vector<double> q(n * num_labels);
  for (std::size_t m = 0; m < n; ++m) {
    softmax_row(logits.row(m), {q.data() + m * num_labels, num_labels});
  }
  return q;
}

}  // namespace

void LossConfig::check() const {
  if (!(iou_weight >= 0.0)) throw DomainError("iou weight must be >= 0");
  if (!(div_epsilon > 0.0)) throw DomainError("IoU denominator tolerance must be > 0");
}

LossResult soft_cross_entropy(const ProbMap& target, const LogitMap& logits,
                              const LossConfig& cfg) {
  check_shapes(target, logits, "soft_cross_entropy");
  const std::size_t n = logits.dims().pixels();
  const auto num_labels = static_cast<std::size_t>(logits.num_labels());
  LossResult out;
  out.grad.assign(n * num_labels, 0.0);

  const std::size_t valid = target.valid_count();
  if (valid == 0) return out;
  const double scale =
      cfg.normalization == PixelNorm::kMean ? 1.0 / static_cast<double>(valid) : 1.0;

  double total = 0.0;
  for (std::size_t m = 0; m < n; ++m) {
    if (!target.is_valid(m)) continue;
    auto f = logits.row(m);
    auto t = target.row(m);
    const double shift = *std::max_element(f.begin(), f.end());
    double z = 0.0;
    for (double v : f) z += std::exp(v - shift);
    const double log_z = std::log(z);
    double* g = out.grad.data() + m * num_labels;
    for (std::size_t l = 0; l < num_labels; ++l) {
      const double log_q = f[l] - shift - log_z;
      if (t[l] != 0.0) total -= t[l] * log_q;
      g[l] = (std::exp(log_q) - t[l]) * scale;
    }
  }
  out.value = total * scale;
  return out;
}

LossResult prob_iou_gain(const ProbMap& target, const LogitMap& logits, const LossConfig& cfg) {
  check_shapes(target, logits, "prob_iou_gain");
  const std::size_t n = logits.dims().pixels();
  const auto num_labels = static_cast<std::size_t>(logits.num_labels());
  const std::vector<double> q = softmax_all(logits);

  // Fixed pixel order keeps the reductions bit-reproducible.
  std::vector<double> inter(num_labels, 0.0);
  std::vector<double> uni(num_labels, 0.0);
  for (std::size_t m = 0; m < n; ++m) {
    if (!target.is_valid(m)) continue;
    auto t = target.row(m);
    for (std::size_t l = 0; l < num_labels; ++l) {
      const double tq = t[l] * q[m * num_labels + l];
      inter[l] += tq;
      uni[l] += t[l] + q[m * num_labels + l] - tq;
    }
  }

  std::vector<std::uint8_t> included(num_labels, 0);
  std::size_t num_included = 0;
  for (std::size_t l = 0; l < num_labels; ++l) {
    if (uni[l] >= cfg.div_epsilon) {
      included[l] = 1;
      ++num_included;
    }
  }

  LossResult out;
  out.grad.assign(n * num_labels, 0.0);
  if (num_included == 0) return out;
  const double inv_count = 1.0 / static_cast<double>(num_included);

  double value = 0.0;
  for (std::size_t l = 0; l < num_labels; ++l) {
    if (included[l]) value += inter[l] / uni[l];
  }
  out.value = value * inv_count;

  // dJ/dq_m(l) = (t V_l - U_l (1 - t)) / V_l^2 / |included|, then back
  // through the softmax Jacobian: dJ/df_k = q_k (g_k - sum_j q_j g_j).
  std::vector<double> dq(num_labels);
  for (std::size_t m = 0; m < n; ++m) {
    if (!target.is_valid(m)) continue;
    auto t = target.row(m);
    const double* qm = q.data() + m * num_labels;
    double dot = 0.0;
    for (std::size_t l = 0; l < num_labels; ++l) {
      if (!included[l]) {
        dq[l] = 0.0;
        continue;
      }
      dq[l] = (t[l] * uni[l] - inter[l] * (1.0 - t[l])) / (uni[l] * uni[l]) * inv_count;
      dot += qm[l] * dq[l];
    }
    double* g = out.grad.data() + m * num_labels;
    for (std::size_t l = 0; l < num_labels; ++l) g[l] = qm[l] * (dq[l] - dot);
  }
  return out;
}

LossResult combined_loss(const ProbMap& target, const LogitMap& logits, const LossConfig& cfg) {
  cfg.check();
  LossResult ce = soft_cross_entropy(target, logits, cfg);
  if (cfg.iou_weight == 0.0) return ce;
  const LossResult iou = prob_iou_gain(target, logits, cfg);
  ce.value -= cfg.iou_weight * iou.value;
  for (std::size_t i = 0; i < ce.grad.size(); ++i) ce.grad[i] -= cfg.iou_weight * iou.grad[i];
  return ce;
}

std::vector<double> finite_diff_grad(const LossEvaluator& loss, const LogitMap& logits, double h) {
  if (!(h > 0.0)) throw DomainError("finite difference step must be positive");
  const auto values = logits.values();
  std::vector<double> grad(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double plus = loss(logits.with_value(i, values[i] + h));
    const double minus = loss(logits.with_value(i, values[i] - h));
    grad[i] = (plus - minus) / (2.0 * h);
  }
  return grad;
}

GradientDiscrepancy compare_gradients(const std::vector<double>& analytic,
                                      const std::vector<double>& numeric) {
  if (analytic.size() != numeric.size()) throw DomainError("gradient sizes differ");
  GradientDiscrepancy out;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    double err = std::abs(analytic[i] - numeric[i]) / std::max(1.0, std::abs(analytic[i]));
    if (std::isnan(err)) err = std::numeric_limits<double>::infinity();
    if (err > out.max_relative_error) {
      out.max_relative_error = err;
      out.worst_index = i;
    }
  }
  return out;
}

}  // namespace wseg
