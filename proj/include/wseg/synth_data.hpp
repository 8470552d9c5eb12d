#pragma once

// Synthetic stand-ins for the simple single-object dataset D(I) and the
// complex multi-object dataset D(P): class-keyed shapes on textured
// backgrounds, oracle ground truth, noisy saliency/attention cues, and the
// dataset filtering heuristics.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "wseg/core_types.hpp"
#include "wseg/cue_fusion.hpp"
#include "wseg/segmenter.hpp"

namespace wseg {

inline constexpr int kMaxSyntheticClasses = 8;
inline constexpr int kMinSyntheticSide = 16;

/// Shape-family names in id order (ids follow alphabetical order).
const std::vector<std::string>& synthetic_class_names();

/// Label space over the first `num_classes` synthetic shape families.
LabelSpace synthetic_label_space(int num_classes);

struct SceneRecord {
  std::string id;
  Image image;
  LabelSet labels;
  SegMask gt;  // oracle; used for cue synthesis and evaluation only
  // Nominal size of the photo this raster stands in for. The size filter
  // reads these, so the raster itself can stay small.
  int source_width = 0;
  int source_height = 0;
};

struct CueRecord {
  std::string scene_id;
  CueMap saliency;
  CueMap attention;      // for `attention_class`
  Label attention_class = 0;
  Label predicted_class = 0;
  double predicted_prob = 0.0;
};

struct SimpleSample {
  SceneRecord scene;
  CueRecord cues;
};

struct FilterConfig {
  int min_side = 200;
  int max_side = 500;
  double min_attention_prob = 0.2;
  double saliency_threshold = 0.5;
  double attention_threshold = 0.5;
  int top_k_per_class = 1500;
  std::map<Label, int> top_k_override;  // e.g. a "person"-like class kept at 2500
  double fg_ratio_min = 0.05;
  int m_step_top_n = 10000;  // 0: match the size of the filtered complex set

  void check() const;
  int top_k_for(Label l) const;

  /// Default thresholds with per-class caps scaled to a few hundred images.
  static FilterConfig desk_scale();
};

struct NoiseConfig {
  double boundary_jitter = 0.0;  // std-dev of the whole-map shift, px
  double false_positive_rate = 0.0;
  double false_negative_rate = 0.0;
  int blur_radius = 0;  // box blur half-width, px
  std::uint64_t seed = 0;

  void check() const;
  /// Level 0 is noise-free; 1 is heavy. 0.5 is the "moderate" setting.
  static NoiseConfig from_level(double level, std::uint64_t seed);
};

/// One roughly centred object of `object_class` on a plain textured background.
SceneRecord generate_simple(std::uint64_t seed, Label object_class, const LabelSpace& space,
                            Dims dims, std::string id = "");

/// One object per class at random positions; later shapes occlude earlier
/// ones. The background carries desaturated class-coloured clutter.
SceneRecord generate_complex(std::uint64_t seed, const LabelSet& classes, const LabelSpace& space,
                             Dims dims, std::string id = "");

/// Noisy saliency (all foreground) and attention (`object_class` only) maps
/// plus a simulated classifier prediction.
CueRecord synth_cues(const SceneRecord& rec, Label object_class, const NoiseConfig& noise,
                     const LabelSpace& space);

/// Size, classifier-agreement and confidence checks, then per-class ranking
/// by saliency/attention mask overlap. Returns indices into `samples`,
/// grouped by class id, best first; ties go to the smaller record id.
std::vector<std::size_t> filter_simple(std::span<const SimpleSample> samples,
                                       const FilterConfig& cfg);

/// Overlap between the binarized saliency and attention cues.
std::size_t cue_overlap(const CueRecord& cues, const FilterConfig& cfg);

/// True unless foreground pixels / all pixels is below cfg.fg_ratio_min.
bool passes_foreground_ratio(const SegMask& prediction, const FilterConfig& cfg);

/// Keeps complex records whose predicted foreground ratio is not below the
/// threshold. Returns indices in input order.
std::vector<std::size_t> filter_complex(std::span<const SegMask> predictions,
                                        const FilterConfig& cfg);
std::vector<std::size_t> filter_complex(std::span<const SceneRecord> records,
                                        const SegmenterParams& model, const LabelSpace& space,
                                        const FilterConfig& cfg);

/// Ranks the samples listed in `candidates` by overlap between binarized
/// attention and the predicted foreground; keeps the best `keep` (ties by
/// record id). `predictions` parallels `samples`.
std::vector<std::size_t> refilter_simple_for_mstep(std::span<const SimpleSample> samples,
                                                   std::span<const std::size_t> candidates,
                                                   std::span<const SegMask> predictions,
                                                   std::size_t keep, const FilterConfig& cfg);
std::vector<std::size_t> refilter_simple_for_mstep(std::span<const SimpleSample> samples,
                                                   std::span<const std::size_t> candidates,
                                                   const SegmenterParams& model,
                                                   const LabelSpace& space, std::size_t keep,
                                                   const FilterConfig& cfg);

struct DatasetConfig {
  int num_classes = 6;
  int num_simple = 300;
  int num_complex = 150;
  int num_val = 100;
  Dims dims{64, 64};
  double noise_level = 0.5;
  std::uint64_t seed = 42;
};

struct SyntheticDataset {
  LabelSpace space;
  std::vector<SimpleSample> simple;
  std::vector<SceneRecord> complex;
  std::vector<SceneRecord> val;
};

/// Record i of each split uses seed derive_seed(seed, split) ^ i.
SyntheticDataset generate_dataset(const DatasetConfig& cfg);

}  // namespace wseg
