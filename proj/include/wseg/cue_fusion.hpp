#pragma once

// Fusion of a class-agnostic saliency map with a class-specific attention map
// into the soft target used to train the initial segmenter.

#include <cstddef>

#include "wseg/core_types.hpp"

namespace wseg {

enum class Combiner { kMax, kProduct, kMean };

struct FusionConfig {
  Combiner combiner = Combiner::kMax;
  double saliency_threshold = 0.5;
  double attention_threshold = 0.5;

  void check() const;
};

/// M(m) = h(s(m), a(m)) per pixel.
CueMap fuse_cues(const CueMap& saliency, const CueMap& attention,
                 const FusionConfig& cfg = {});

/// Soft target for a single-object image of class `object_class`: mass M(m) on
/// the object class, 1 - M(m) on background, zero elsewhere.
ProbMap target_distribution(const CueMap& fused, Label object_class,
                            const LabelSpace& space);

/// 1 where value > threshold (strict).
BinaryMask binarize(const CueMap& map, double threshold);

/// Number of pixels set in both masks.
std::size_t mask_intersection_area(const BinaryMask& a, const BinaryMask& b);

}  // namespace wseg
