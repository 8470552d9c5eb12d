#pragma once

// Randomized finite-difference verification of the loss gradients.

#include <cstdint>
#include <string>
#include <vector>

#include "wseg/core_types.hpp"
#include "wseg/losses.hpp"

namespace wseg {

struct LossInstance {
  ProbMap target;
  LogitMap logits;
  LossConfig cfg;
};

/// Random dims up to max_side x max_side, 2..max_labels labels, targets that
/// are soft, one-hot or restricted to a random label set, some ignored pixels.
LossInstance random_loss_instance(std::uint64_t seed, int max_side = 8, int max_labels = 6);

struct GradCheckEntry {
  std::string loss;  // "soft_cross_entropy", "prob_iou_gain", "combined_loss"
  double worst_error = 0.0;
  int worst_trial = -1;
  std::size_t worst_index = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double worst_error = 0.0;
  int trials = 0;
};

GradCheckReport run_grad_check(int trials, std::uint64_t seed, double step = 1e-4);

}  // namespace wseg
