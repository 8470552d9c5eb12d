#include "wseg/posterior.hpp"

#include <cmath>
#include <limits>

namespace wseg {

PriorVector::PriorVector(const LabelSet& present, const LabelSpace& space)
    : allowed_(static_cast<std::size_t>(space.num_labels()), 0) {
  allowed_[kBackground] = 1;
  for (Label l : present.ids()) {
    if (!space.is_foreground(l)) throw DomainError("label prior: class outside label space");
    allowed_[static_cast<std::size_t>(l)] = 1;
  }
}

double PriorVector::value(Label l) const {
  return allows(l) ? 0.0 : -std::numeric_limits<double>::infinity();
}

void HeuristicConfig::check() const {
  if (!(eta >= 0.0 && eta <= 1.0)) throw DomainError("eta must lie in [0,1]");
}

PriorVector label_prior(const LabelSet& present, const LabelSpace& space) {
  return PriorVector(present, space);
}

ProbMap regularized_posterior(const LogitMap& logits, const LabelSet& present,
                              const LabelSpace& space) {
  if (logits.num_labels() != space.num_labels()) {
    throw DomainError("regularized_posterior: logit width does not match label space");
  }
  const PriorVector prior(present, space);
  const std::size_t n = logits.dims().pixels();
  const auto num_labels = static_cast<std::size_t>(space.num_labels());
  std::vector<double> out(n * num_labels, 0.0);
  for (std::size_t m = 0; m < n; ++m) {
    auto f = logits.row(m);
    double shift = -std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < num_labels; ++l) {
      if (prior.allows(static_cast<Label>(l))) shift = std::max(shift, f[l]);
    }
    double total = 0.0;
    double* p = out.data() + m * num_labels;
    for (std::size_t l = 0; l < num_labels; ++l) {
      if (!prior.allows(static_cast<Label>(l))) continue;
      p[l] = std::exp(f[l] - shift);
      total += p[l];
    }
    for (std::size_t l = 0; l < num_labels; ++l) p[l] /= total;
  }
  return ProbMap(logits.dims(), logits.num_labels(), std::move(out));
}

double relative_margin(std::span<const double> p) {
  if (p.size() < 2) throw DomainError("relative_margin needs at least two entries");
  double p1 = -std::numeric_limits<double>::infinity();
  double p2 = -std::numeric_limits<double>::infinity();
  for (double v : p) {
    if (v > p1) {
      p2 = p1;
      p1 = v;
    } else if (v > p2) {
      p2 = v;
    }
  }
  if (!(p1 > 0.0)) throw DomainError("relative_margin: distribution has no positive mass");
  return (p1 - p2) / p1;
}

double epsilon_from_heuristic(double r, const HeuristicConfig& cfg) {
  return r >= cfg.eta ? 1.0 : r;
}

ProbMap mixed_target(const ProbMap& posterior, const HeuristicConfig& cfg) {
  cfg.check();
  const std::size_t n = posterior.dims().pixels();
  const auto num_labels = static_cast<std::size_t>(posterior.num_labels());
  std::vector<double> out(posterior.values().begin(), posterior.values().end());
  if (num_labels < 2) {
    return ProbMap(posterior.dims(), posterior.num_labels(), std::move(out),
                   posterior.valid_flags());
  }
  for (std::size_t m = 0; m < n; ++m) {
    if (!posterior.is_valid(m)) continue;
    auto p = posterior.row(m);
    const double eps = epsilon_from_heuristic(relative_margin(p), cfg);
    const std::size_t top = argmax(p);
    double* q = out.data() + m * num_labels;
    for (std::size_t l = 0; l < num_labels; ++l) q[l] = (1.0 - eps) * p[l];
    q[top] += eps;
  }
  return ProbMap(posterior.dims(), posterior.num_labels(), std::move(out),
                 posterior.valid_flags());
}

}  // namespace wseg
