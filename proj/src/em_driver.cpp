#include "wseg/em_driver.hpp"

#include "wseg/parallel.hpp"
#include "wseg/rng.hpp"

namespace wseg {

namespace {

// Runs `fn`, prefixing any error with the stage name.
template <typename Fn>
auto in_stage(const std::string& stage, Fn&& fn) {
  try {
    return fn();
  } catch (const TrainingError& e) {
    throw TrainingError(stage + ": " + e.what());
  } catch (const DomainError& e) {
    throw DomainError(stage + ": " + e.what());
  }
}

std::vector<SegMask> predict_all(const SegmenterParams& params, std::size_t count,
                                 const auto& features_of, const LabelSpace& space,
                                 unsigned threads) {
  std::vector<std::optional<SegMask>> tmp(count);
  parallel_for(count, threads, [&](std::size_t i) { tmp[i].emplace(predict(params, *features_of(i), space)); });
  std::vector<SegMask> out;
  out.reserve(count);
  for (auto& m : tmp) out.push_back(std::move(*m));
  return out;
}

// Checkpoints hold float32 weights. Every stage hands on the rounded values so
// a run resumed from disk continues exactly as an uninterrupted one.
SegmenterParams rounded(const SegmenterParams& p) {
  SegmenterParams out = p;
  for (double& w : out.mutable_weights()) w = static_cast<double>(static_cast<float>(w));
  return out;
}

StageResult make_stage(int stage, const IouScores& scores, const TrainResult& tr) {
  StageResult s{stage_name(stage), scores, {}};
  s.loss_curve.push_back(tr.initial_loss);
  s.loss_curve.insert(s.loss_curve.end(), tr.epoch_losses.begin(), tr.epoch_losses.end());
  return s;
}

}  // namespace

std::string stage_name(int stage) {
  return stage == 0 ? "Initial" : "EM iter " + std::to_string(stage);
}

void EmConfig::check() const {
  if (iterations < 1) throw DomainError("EM needs at least one iteration");
  heuristic.check();
  init_opt.check();
  mstep_opt.check();
  loss.check();
  filter.check();
  fusion.check();
}

EmConfig EmConfig::desk_scale() {
  EmConfig cfg;
  cfg.filter = FilterConfig::desk_scale();
  cfg.init_opt.learning_rate = 1.0;
  cfg.init_opt.epochs = 20;
  cfg.mstep_opt.learning_rate = 0.5;
  cfg.mstep_opt.epochs = 15;
  cfg.mstep_opt.backtrack = true;
  return cfg;
}

FeatureCache::FeatureCache(const SyntheticDataset& ds, unsigned threads)
    : simple_(ds.simple.size()), complex_(ds.complex.size()), val_(ds.val.size()) {
  parallel_for(ds.simple.size(), threads, [&](std::size_t i) {
    simple_[i] = std::make_shared<const FeatureMap>(extract_features(ds.simple[i].scene.image));
  });
  parallel_for(ds.complex.size(), threads, [&](std::size_t i) {
    complex_[i] = std::make_shared<const FeatureMap>(extract_features(ds.complex[i].image));
  });
  parallel_for(ds.val.size(), threads, [&](std::size_t i) {
    val_[i] = std::make_shared<const FeatureMap>(extract_features(ds.val[i].image));
  });
}

std::vector<TrainingExample> initial_examples(const SyntheticDataset& ds, const FeatureCache& cache,
                                              std::span<const std::size_t> indices,
                                              const FusionConfig& fusion) {
  std::vector<TrainingExample> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    const SimpleSample& s = ds.simple.at(i);
    if (s.scene.labels.size() != 1) {
      throw DomainError("initial model: record " + s.scene.id + " is not single-object");
    }
    const CueMap fused = fuse_cues(s.cues.saliency, s.cues.attention, fusion);
    out.push_back({s.scene.id, cache.simple(i),
                   target_distribution(fused, s.scene.labels.ids().front(), ds.space)});
  }
  return out;
}

TrainResult train_initial(std::span<const TrainingExample> examples, const EmConfig& cfg) {
  if (examples.empty()) throw DomainError("initial model: empty training set");
  LossConfig loss = cfg.loss;
  loss.iou_weight = 0.0;
  OptConfig opt = cfg.init_opt;
  opt.seed = derive_seed(cfg.seed, "train/init");
  opt.threads = cfg.threads;
  return train(examples, loss, opt);
}

ProbMap e_step(const SegmenterParams& params, const FeatureMap& features, const LabelSet& labels,
               const LabelSpace& space, const HeuristicConfig& heuristic) {
  return mixed_target(regularized_posterior(forward(params, features), labels, space), heuristic);
}

TrainResult m_step(const SegmenterParams& params, std::span<const TrainingExample> targets,
                   const EmConfig& cfg, int iteration) {
  if (targets.empty()) throw DomainError("M-step: no training targets");
  OptConfig opt = cfg.mstep_opt;
  opt.seed = derive_seed(cfg.seed, "train/mstep/" + std::to_string(iteration));
  opt.threads = cfg.threads;
  return train(targets, cfg.loss, opt, &params);
}

IouScores evaluate(const SegmenterParams& params, const SyntheticDataset& ds,
                   const FeatureCache& cache, unsigned threads) {
  std::vector<std::optional<ConfusionMatrix>> parts(ds.val.size());
  parallel_for(ds.val.size(), threads, [&](std::size_t i) {
    ConfusionMatrix cm(ds.space.num_labels());
    cm.accumulate(predict(params, *cache.val(i), ds.space), ds.val[i].gt);
    parts[i].emplace(std::move(cm));
  });
  ConfusionMatrix total(ds.space.num_labels());
  for (const auto& p : parts) total.merge(*p);
  return iou_scores(total);
}

EmResult run_em(const SyntheticDataset& ds, const FeatureCache& cache, const EmConfig& cfg,
                const CheckpointSink& sink, const ResumeState* resume) {
  return run_stages(ds, cache, cfg, cfg.iterations, sink, resume);
}

EmResult run_stages(const SyntheticDataset& ds, const FeatureCache& cache, const EmConfig& cfg,
                    int last_stage, const CheckpointSink& sink, const ResumeState* resume) {
  cfg.check();
  if (last_stage < 0 || last_stage > cfg.iterations) {
    throw DomainError("run_em: last stage outside 0..K");
  }
  if (ds.simple.empty() || ds.complex.empty()) {
    throw DomainError("run_em: simple and complex datasets must be nonempty");
  }
  EmResult result{SegmenterParams::zeros(ds.space.num_labels()), {}, {}};
  EmReport& report = result.report;
  report.sizes.simple_raw = ds.simple.size();
  report.sizes.complex_raw = ds.complex.size();

  const std::vector<std::size_t> dI = filter_simple(ds.simple, cfg.filter);
  report.sizes.simple_filtered = dI.size();

  std::vector<std::size_t> dP;
  int first_iteration = 1;
  if (resume) {
    if (resume->completed_stage < 0 || resume->completed_stage > cfg.iterations) {
      throw DomainError("resume: checkpoint stage outside 0..K");
    }
    result.params = resume->params;
    report.stages = resume->report.stages;
    report.sizes.mstep_simple = resume->report.sizes.mstep_simple;
    dP = resume->complex_kept;
    first_iteration = resume->completed_stage + 1;
  } else {
    in_stage(stage_name(0), [&] {
      const auto examples = initial_examples(ds, cache, dI, cfg.fusion);
      const TrainResult tr = train_initial(examples, cfg);
      result.params = rounded(tr.params);
      report.stages.push_back(make_stage(0, evaluate(result.params, ds, cache, cfg.threads), tr));
      const auto preds = predict_all(
          result.params, ds.complex.size(), [&](std::size_t i) { return cache.complex(i); }, ds.space,
          cfg.threads);
      dP = filter_complex(preds, cfg.filter);
      return 0;
    });
    result.stage_params.push_back(result.params);
    if (sink) sink({0, stage_name(0), result.params, report, dP});
  }
  report.sizes.complex_filtered = dP.size();
  const std::size_t keep =
      cfg.filter.m_step_top_n == 0 ? dP.size() : static_cast<std::size_t>(cfg.filter.m_step_top_n);

  for (int k = first_iteration; k <= last_stage; ++k) {
    in_stage(stage_name(k), [&] {
      const SegmenterParams& theta = result.params;
      const auto simple_preds = predict_all(
          theta, ds.simple.size(),
          [&](std::size_t i) { return cache.simple(i); }, ds.space, cfg.threads);
      const auto dI_m = refilter_simple_for_mstep(ds.simple, dI, simple_preds, keep, cfg.filter);
      report.sizes.mstep_simple.push_back(dI_m.size());

      // Targets are computed once here and held fixed for the whole M-step.
      std::vector<std::optional<TrainingExample>> slots(dP.size() + dI_m.size());
      parallel_for(slots.size(), cfg.threads, [&](std::size_t j) {
        if (j < dP.size()) {
          const std::size_t i = dP[j];
          slots[j].emplace(TrainingExample{
              ds.complex[i].id, cache.complex(i),
              e_step(theta, *cache.complex(i), ds.complex[i].labels, ds.space, cfg.heuristic)});
        } else {
          const std::size_t i = dI_m[j - dP.size()];
          const SceneRecord& rec = ds.simple[i].scene;
          slots[j].emplace(TrainingExample{
              rec.id, cache.simple(i),
              e_step(theta, *cache.simple(i), rec.labels, ds.space, cfg.heuristic)});
        }
      });
      std::vector<TrainingExample> targets;
      targets.reserve(slots.size());
      for (auto& s : slots) targets.push_back(std::move(*s));

      const TrainResult tr = m_step(theta, targets, cfg, k);
      result.params = rounded(tr.params);
      report.stages.push_back(make_stage(k, evaluate(result.params, ds, cache, cfg.threads), tr));
      return 0;
    });
    result.stage_params.push_back(result.params);
    if (sink) sink({k, stage_name(k), result.params, report, dP});
  }
  return result;
}

}  // namespace wseg
