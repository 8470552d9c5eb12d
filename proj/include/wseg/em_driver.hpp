#pragma once

// EM training loop: an initial model fitted to fused-cue targets on simple
// images, then K rounds of (E) posterior targets under the image-label prior
// and (M) combined CE + IoU optimization over complex and refiltered simple
// images.

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wseg/cue_fusion.hpp"
#include "wseg/eval.hpp"
#include "wseg/losses.hpp"
#include "wseg/posterior.hpp"
#include "wseg/segmenter.hpp"
#include "wseg/synth_data.hpp"

namespace wseg {

struct EmConfig {
  int iterations = 2;  // K
  HeuristicConfig heuristic{};
  OptConfig init_opt{};
  OptConfig mstep_opt{};
  LossConfig loss{};
  FilterConfig filter{};
  FusionConfig fusion{};
  std::uint64_t seed = 42;
  unsigned threads = 1;

  void check() const;

  /// Settings used by the synthetic benchmark: default hyperparameters except
  /// for learning rate and epoch counts, which are sized for a linear model
  /// on a few hundred 64x64 images, and M-step backtracking.
  static EmConfig desk_scale();
};

/// Features for every record of a dataset, computed once.
class FeatureCache {
 public:
  FeatureCache(const SyntheticDataset& ds, unsigned threads = 1);

  const std::shared_ptr<const FeatureMap>& simple(std::size_t i) const { return simple_[i]; }
  const std::shared_ptr<const FeatureMap>& complex(std::size_t i) const { return complex_[i]; }
  const std::shared_ptr<const FeatureMap>& val(std::size_t i) const { return val_[i]; }

 private:
  std::vector<std::shared_ptr<const FeatureMap>> simple_;
  std::vector<std::shared_ptr<const FeatureMap>> complex_;
  std::vector<std::shared_ptr<const FeatureMap>> val_;
};

/// Fused-cue soft targets for the listed simple samples.
std::vector<TrainingExample> initial_examples(const SyntheticDataset& ds, const FeatureCache& cache,
                                              std::span<const std::size_t> indices,
                                              const FusionConfig& fusion);

/// Pure soft cross-entropy (lambda = 0) from zero weights.
TrainResult train_initial(std::span<const TrainingExample> examples, const EmConfig& cfg);

/// forward -> regularized posterior under `labels` -> Relative Heuristic mix.
ProbMap e_step(const SegmenterParams& params, const FeatureMap& features, const LabelSet& labels,
               const LabelSpace& space, const HeuristicConfig& heuristic);

/// Combined-loss training warm-started from `params`.
TrainResult m_step(const SegmenterParams& params, std::span<const TrainingExample> targets,
                   const EmConfig& cfg, int iteration);

/// Confusion-matrix scores of `params` on the validation split.
IouScores evaluate(const SegmenterParams& params, const SyntheticDataset& ds,
                   const FeatureCache& cache, unsigned threads = 1);

struct StageCheckpoint {
  int stage = 0;  // 0 = initial model, k = after EM iteration k
  std::string name;
  const SegmenterParams& params;
  const EmReport& report;  // stages completed so far
  const std::vector<std::size_t>& complex_kept;  // D(P) indices
};

using CheckpointSink = std::function<void(const StageCheckpoint&)>;

/// State for continuing a run after stage `completed_stage`.
struct ResumeState {
  int completed_stage = 0;
  SegmenterParams params;
  EmReport report;
  std::vector<std::size_t> complex_kept;
};

struct EmResult {
  SegmenterParams params;
  EmReport report;
  std::vector<SegmenterParams> stage_params;  // one per stage run in this call
};

/// Full pipeline. Errors are rethrown with the failing stage named.
EmResult run_em(const SyntheticDataset& ds, const FeatureCache& cache, const EmConfig& cfg,
                const CheckpointSink& sink = {}, const ResumeState* resume = nullptr);

/// As run_em but stops after `last_stage` (0 = initial model only).
EmResult run_stages(const SyntheticDataset& ds, const FeatureCache& cache, const EmConfig& cfg,
                    int last_stage, const CheckpointSink& sink = {},
                    const ResumeState* resume = nullptr);

std::string stage_name(int stage);

}  // namespace wseg
