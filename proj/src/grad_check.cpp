#include "wseg/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "wseg/rng.hpp"

namespace wseg {

LossInstance random_loss_instance(std::uint64_t seed, int max_side, int max_labels) {
  Rng rng(seed);
  const Dims dims{rng.integer(1, max_side), rng.integer(1, max_side)};
  const int num_labels = rng.integer(2, max_labels);
  const auto labels = static_cast<std::size_t>(num_labels);
  const std::size_t n = dims.pixels();

  // Allowed labels: background plus a random nonempty subset.
  std::vector<std::uint8_t> allowed(labels, 0);
  allowed[0] = 1;
  allowed[1 + rng.index(labels - 1)] = 1;
  for (std::size_t l = 1; l < labels; ++l) {
    if (rng.bernoulli(0.5)) allowed[l] = 1;
  }

  const int style = rng.integer(0, 2);  // 0 soft, 1 one-hot, 2 sharpened
  std::vector<double> target(n * labels, 0.0);
  for (std::size_t m = 0; m < n; ++m) {
    double* t = target.data() + m * labels;
    if (style == 1) {
      std::size_t pick;
      do {
        pick = rng.index(labels);
      } while (!allowed[pick]);
      t[pick] = 1.0;
      continue;
    }
    double total = 0.0;
    for (std::size_t l = 0; l < labels; ++l) {
      if (!allowed[l]) continue;
      t[l] = style == 0 ? rng.uniform() : std::pow(rng.uniform(), 4.0);
      total += t[l];
    }
    if (total <= 0.0) {
      t[0] = 1.0;
      total = 1.0;
    }
    for (std::size_t l = 0; l < labels; ++l) t[l] /= total;
  }

  std::vector<std::uint8_t> valid;
  if (rng.bernoulli(0.5)) {
    valid.assign(n, 1);
    for (auto& v : valid) v = rng.bernoulli(0.2) ? 0 : 1;
  }

  std::vector<double> logits(n * labels);
  const double scale = rng.uniform(0.5, 3.0);
  for (double& f : logits) f = rng.normal(0.0, scale);

  LossConfig cfg;
  cfg.iou_weight = rng.uniform(0.0, 2.0);
  cfg.normalization = rng.bernoulli(0.5) ? PixelNorm::kMean : PixelNorm::kSum;
  return {ProbMap(dims, num_labels, std::move(target), std::move(valid)),
          LogitMap(dims, num_labels, std::move(logits)), cfg};
}

GradCheckReport run_grad_check(int trials, std::uint64_t seed, double step) {
  GradCheckReport report;
  report.trials = trials;
  report.entries = {{"soft_cross_entropy"}, {"prob_iou_gain"}, {"combined_loss"}};
  for (int trial = 0; trial < trials; ++trial) {
    const LossInstance inst =
        random_loss_instance(derive_seed(seed, "grad-check/" + std::to_string(trial)));
    using LossFn = LossResult (*)(const ProbMap&, const LogitMap&, const LossConfig&);
    const LossFn fns[] = {soft_cross_entropy, prob_iou_gain, combined_loss};
    for (std::size_t k = 0; k < 3; ++k) {
      const LossFn fn = fns[k];
      const LossResult analytic = fn(inst.target, inst.logits, inst.cfg);
      const auto numeric = finite_diff_grad(
          [&](const LogitMap& f) { return fn(inst.target, f, inst.cfg).value; }, inst.logits, step);
      const GradientDiscrepancy d = compare_gradients(analytic.grad, numeric);
      GradCheckEntry& e = report.entries[k];
      if (d.max_relative_error > e.worst_error || e.worst_trial < 0) {
        e.worst_error = d.max_relative_error;
        e.worst_trial = trial;
        e.worst_index = d.worst_index;
      }
    }
  }
  for (const auto& e : report.entries) report.worst_error = std::max(report.worst_error, e.worst_error);
  return report;
}

}  // namespace wseg
