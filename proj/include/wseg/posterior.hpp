#pragma once

// E-step: label prior from image-level labels, the regularized posterior
// p(y|I,z) ∝ exp(f + g), and the Relative Heuristic mixture with its argmax.

#include <span>
#include <vector>

#include "wseg/core_types.hpp"

namespace wseg {

/// g(l): 0 for background and present classes, excluded (-inf) otherwise.
class PriorVector {
 public:
  PriorVector(const LabelSet& present, const LabelSpace& space);

  int size() const { return static_cast<int>(allowed_.size()); }
  bool allows(Label l) const { return allowed_[static_cast<std::size_t>(l)] != 0; }
  /// 0 for allowed labels, -infinity for excluded ones.
  double value(Label l) const;

 private:
  std::vector<std::uint8_t> allowed_;
};

struct HeuristicConfig {
  double eta = 0.05;

  void check() const;
};

PriorVector label_prior(const LabelSet& present, const LabelSpace& space);

/// Softmax over allowed labels only; excluded labels get exactly zero mass.
ProbMap regularized_posterior(const LogitMap& logits, const LabelSet& present,
                              const LabelSpace& space);

/// (p1 - p2) / p1 for the two largest entries.
double relative_margin(std::span<const double> p);

/// 1 if r >= eta, otherwise r.
double epsilon_from_heuristic(double r, const HeuristicConfig& cfg);

/// Per pixel: (1 - eps) * p + eps * one_hot(argmax p). Invalid pixels are
/// copied through.
ProbMap mixed_target(const ProbMap& posterior, const HeuristicConfig& cfg);

}  // namespace wseg
