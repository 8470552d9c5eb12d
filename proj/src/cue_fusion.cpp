#include "wseg/cue_fusion.hpp"

#include <algorithm>
#include <string>

namespace wseg {

namespace {

bool in_unit_interval(double v) { return v >= 0.0 && v <= 1.0; }

double combine(Combiner h, double s, double a) {
  switch (h) {
    case Combiner::kMax:
      return std::max(s, a);
    case Combiner::kProduct:
      return s * a;
    case Combiner::kMean:
      return 0.5 * (s + a);
  }
  return std::max(s, a);
}

}  // namespace

void FusionConfig::check() const {
  if (!in_unit_interval(saliency_threshold) || !in_unit_interval(attention_threshold)) {
    throw DomainError("fusion thresholds must lie in [0,1]");
  }
}

CueMap fuse_cues(const CueMap& saliency, const CueMap& attention, const FusionConfig& cfg) {
  if (saliency.dims() != attention.dims()) {
    throw DomainError("fuse_cues: saliency and attention dimensions differ");
  }
  const std::size_t n = saliency.dims().pixels();
  std::vector<double> fused(n);
  for (std::size_t m = 0; m < n; ++m) fused[m] = combine(cfg.combiner, saliency[m], attention[m]);
  return CueMap(saliency.dims(), std::move(fused));
}

ProbMap target_distribution(const CueMap& fused, Label object_class, const LabelSpace& space) {
  if (!space.is_foreground(object_class)) {
    throw DomainError("target_distribution: class " + std::to_string(object_class) +
                      " is not a foreground class");
  }
  const std::size_t n = fused.dims().pixels();
  const auto num_labels = static_cast<std::size_t>(space.num_labels());
  std::vector<double> values(n * num_labels, 0.0);
  for (std::size_t m = 0; m < n; ++m) {
    values[m * num_labels + object_class] = fused[m];
    values[m * num_labels] = 1.0 - fused[m];
  }
  return ProbMap(fused.dims(), space.num_labels(), std::move(values));
}

BinaryMask binarize(const CueMap& map, double threshold) {
  if (!in_unit_interval(threshold)) throw DomainError("binarize: threshold outside [0,1]");
  const std::size_t n = map.dims().pixels();
  std::vector<std::uint8_t> bits(n);
  for (std::size_t m = 0; m < n; ++m) bits[m] = map[m] > threshold ? 1 : 0;
  return BinaryMask(map.dims(), std::move(bits));
}

std::size_t mask_intersection_area(const BinaryMask& a, const BinaryMask& b) {
  if (a.dims() != b.dims()) throw DomainError("mask_intersection_area: dimensions differ");
  std::size_t count = 0;
  const std::size_t n = a.dims().pixels();
  for (std::size_t m = 0; m < n; ++m) count += (a[m] && b[m]) ? 1 : 0;
  return count;
}

}  // namespace wseg
