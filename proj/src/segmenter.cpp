#include "wseg/segmenter.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

#include "wseg/parallel.hpp"
#include "wseg/rng.hpp"

namespace wseg {

FeatureMap::FeatureMap(Dims dims, int dim, std::vector<float> values)
    : dims_(dims), dim_(dim), values_(std::move(values)) {
  if (dim_ < 1) throw DomainError("feature dimension must be positive");
  if (values_.size() != dims_.pixels() * static_cast<std::size_t>(dim_)) {
    throw DomainError("feature map size does not match dimensions");
  }
}

FeatureMap extract_features(const Image& image) {
  const Dims dims = image.dims();
  const int h = dims.height;
  const int w = dims.width;
  std::vector<float> out(dims.pixels() * kFeatureDim);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const std::size_t m = static_cast<std::size_t>(r) * w + c;
      float* phi = out.data() + m * kFeatureDim;
      phi[0] = 1.0f;
      for (int ch = 0; ch < 3; ++ch) phi[1 + ch] = static_cast<float>(image.at(m, ch));
      phi[4] = static_cast<float>(static_cast<double>(c) / w);
      phi[5] = static_cast<float>(static_cast<double>(r) / h);

      double sum[3] = {0, 0, 0};
      double sq[3] = {0, 0, 0};
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          const int rr = std::clamp(r + dr, 0, h - 1);
          const int cc = std::clamp(c + dc, 0, w - 1);
          const std::size_t n = static_cast<std::size_t>(rr) * w + cc;
          for (int ch = 0; ch < 3; ++ch) {
            const double v = image.at(n, ch);
            sum[ch] += v;
            sq[ch] += v * v;
          }
        }
      }
      for (int ch = 0; ch < 3; ++ch) {
        const double mean = sum[ch] / 9.0;
        const double var = std::max(0.0, sq[ch] / 9.0 - mean * mean);
        phi[6 + ch] = static_cast<float>(mean);
        phi[9 + ch] = static_cast<float>(std::sqrt(var));
      }
    }
  }
  return FeatureMap(dims, kFeatureDim, std::move(out));
}

SegmenterParams::SegmenterParams(int num_labels, int dim, std::vector<double> weights)
    : num_labels_(num_labels), dim_(dim), weights_(std::move(weights)) {
  if (num_labels_ < 1 || dim_ < 1) throw DomainError("segmenter shape must be positive");
  if (weights_.size() != static_cast<std::size_t>(num_labels_) * dim_) {
    throw DomainError("segmenter weight count does not match shape");
  }
  for (double v : weights_) {
    if (!std::isfinite(v)) throw DomainError("segmenter weights must be finite");
  }
}

SegmenterParams SegmenterParams::zeros(int num_labels, int dim) {
  return SegmenterParams(num_labels, dim,
                         std::vector<double>(static_cast<std::size_t>(num_labels) * dim, 0.0));
}

LogitMap forward(const SegmenterParams& params, const FeatureMap& features) {
  if (features.dim() != params.dim()) {
    throw DomainError("forward: feature dimension " + std::to_string(features.dim()) +
                      " does not match model dimension " + std::to_string(params.dim()));
  }
  const std::size_t n = features.dims().pixels();
  const auto num_labels = static_cast<std::size_t>(params.num_labels());
  const auto d = static_cast<std::size_t>(params.dim());
  const auto w = params.weights();
  std::vector<double> logits(n * num_labels);
  for (std::size_t m = 0; m < n; ++m) {
    auto phi = features.row(m);
    for (std::size_t l = 0; l < num_labels; ++l) {
      const double* wl = w.data() + l * d;
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) acc += wl[k] * phi[k];
      logits[m * num_labels + l] = acc;
    }
  }
  return LogitMap(features.dims(), params.num_labels(), std::move(logits));
}

ProbMap softmax(const LogitMap& logits) {
  const std::size_t n = logits.dims().pixels();
  const auto num_labels = static_cast<std::size_t>(logits.num_labels());
  std::vector<double> p(n * num_labels);
  for (std::size_t m = 0; m < n; ++m) {
    softmax_row(logits.row(m), {p.data() + m * num_labels, num_labels});
  }
  return ProbMap(logits.dims(), logits.num_labels(), std::move(p));
}

void accumulate_weight_gradient(const FeatureMap& features, std::span<const double> logit_grad,
                                int num_labels, std::span<double> grad_out) {
  const std::size_t n = features.dims().pixels();
  const auto labels = static_cast<std::size_t>(num_labels);
  const auto d = static_cast<std::size_t>(features.dim());
  if (logit_grad.size() != n * labels || grad_out.size() != labels * d) {
    throw DomainError("accumulate_weight_gradient: shape mismatch");
  }
  for (std::size_t m = 0; m < n; ++m) {
    auto phi = features.row(m);
    const double* g = logit_grad.data() + m * labels;
    for (std::size_t l = 0; l < labels; ++l) {
      if (g[l] == 0.0) continue;
      double* out = grad_out.data() + l * d;
      for (std::size_t k = 0; k < d; ++k) out[k] += g[l] * phi[k];
    }
  }
}

void OptConfig::check() const {
  if (!(learning_rate >= 0.0 && momentum >= 0.0 && weight_decay >= 0.0)) {
    throw DomainError("optimizer rates must be >= 0");
  }
  if (!(lr_decay_factor > 0.0)) throw DomainError("lr decay factor must be positive");
  if (epochs < 0) throw DomainError("epoch count must be >= 0");
  if (accumulation < 1) throw DomainError("gradient accumulation must be >= 1");
}

double OptConfig::learning_rate_at(int epoch) const {
  if (lr_decay_every <= 0) return learning_rate;
  return learning_rate / std::pow(lr_decay_factor, epoch / lr_decay_every);
}

void sgd_step(SegmenterParams& params, std::span<const double> grad, SgdState& state,
              const OptConfig& cfg, int epoch) {
  auto w = params.mutable_weights();
  if (grad.size() != w.size()) throw DomainError("sgd_step: gradient shape mismatch");
  for (double g : grad) {
    if (!std::isfinite(g)) throw TrainingError("sgd_step: non-finite gradient");
  }
  if (state.velocity.size() != w.size()) state.velocity.assign(w.size(), 0.0);
  const double lr = cfg.learning_rate_at(epoch);
  const auto d = static_cast<std::size_t>(params.dim());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double decay = (i % d == 0) ? 0.0 : cfg.weight_decay * w[i];
    state.velocity[i] = cfg.momentum * state.velocity[i] + grad[i] + decay;
    w[i] -= lr * state.velocity[i];
  }
  for (double v : w) {
    if (!std::isfinite(v)) throw TrainingError("sgd_step: weights diverged");
  }
}

namespace {

struct ImageLoss {
  double value = 0.0;
  std::vector<double> weight_grad;
};

ImageLoss image_loss(const SegmenterParams& params, const TrainingExample& ex,
                     const LossConfig& loss_cfg, bool with_grad) {
  // Shapes were checked by the caller, so a failure here means overflow.
  std::optional<LogitMap> maybe;
  try {
    maybe.emplace(forward(params, *ex.features));
  } catch (const DomainError&) {
    throw TrainingError("non-finite logits on record " + ex.id);
  }
  const LogitMap& logits = *maybe;
  LossResult r = combined_loss(ex.target, logits, loss_cfg);
  if (!std::isfinite(r.value)) throw TrainingError("non-finite loss on record " + ex.id);
  ImageLoss out{r.value, {}};
  if (with_grad) {
    out.weight_grad.assign(static_cast<std::size_t>(params.num_labels()) * params.dim(), 0.0);
    accumulate_weight_gradient(*ex.features, r.grad, params.num_labels(), out.weight_grad);
  }
  return out;
}

}  // namespace

double mean_loss(const SegmenterParams& params, std::span<const TrainingExample> examples,
                 const LossConfig& loss_cfg, unsigned threads) {
  if (examples.empty()) return 0.0;
  std::vector<double> losses(examples.size());
  parallel_for(examples.size(), threads, [&](std::size_t i) {
    losses[i] = image_loss(params, examples[i], loss_cfg, false).value;
  });
  double total = 0.0;
  for (double v : losses) total += v;
  return total / static_cast<double>(examples.size());
}

TrainResult train(std::span<const TrainingExample> examples, const LossConfig& loss_cfg,
                  const OptConfig& opt_cfg, const SegmenterParams* init) {
  loss_cfg.check();
  opt_cfg.check();
  if (examples.empty()) throw DomainError("train: empty dataset");
  const int num_labels = examples.front().target.num_labels();
  const int dim = examples.front().features->dim();
  for (const auto& ex : examples) {
    if (ex.target.num_labels() != num_labels || ex.features->dim() != dim) {
      throw DomainError("train: record " + ex.id + " has inconsistent shape");
    }
  }

  TrainResult result{init ? *init : SegmenterParams::zeros(num_labels, dim), 0.0, {}};
  if (init && (init->num_labels() != num_labels || init->dim() != dim)) {
    throw DomainError("train: initial parameters do not match the dataset");
  }
  result.initial_loss = mean_loss(result.params, examples, loss_cfg, opt_cfg.threads);

  Rng rng(derive_seed(opt_cfg.seed, "train/shuffle"));
  SgdState state;
  std::vector<std::size_t> order(examples.size());
  const std::size_t num_weights = static_cast<std::size_t>(num_labels) * dim;
  const auto batch = static_cast<std::size_t>(opt_cfg.accumulation);

  OptConfig active = opt_cfg;
  double last_loss = result.initial_loss;
  for (int epoch = 0; epoch < opt_cfg.epochs; ++epoch) {
    const SegmenterParams before = result.params;
    const SgdState state_before = state;
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order.begin(), order.end());
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t count = std::min(batch, order.size() - start);
      std::vector<ImageLoss> parts(count);
      parallel_for(count, opt_cfg.threads, [&](std::size_t i) {
        parts[i] = image_loss(result.params, examples[order[start + i]], loss_cfg, true);
      });
      // Summed in batch order regardless of which worker produced each part.
      std::vector<double> grad(num_weights, 0.0);
      for (const auto& p : parts) {
        for (std::size_t k = 0; k < num_weights; ++k) grad[k] += p.weight_grad[k];
      }
      for (double& g : grad) g /= static_cast<double>(count);
      sgd_step(result.params, grad, state, active, epoch);
    }
    const double loss = mean_loss(result.params, examples, loss_cfg, opt_cfg.threads);
    if (opt_cfg.backtrack && loss > last_loss) {
      result.params = before;
      state = state_before;
      active.learning_rate *= 0.5;
      ++result.rejected_epochs;
    } else {
      last_loss = loss;
    }
    result.epoch_losses.push_back(last_loss);
  }
  return result;
}

SegMask predict(const SegmenterParams& params, const FeatureMap& features,
                const LabelSpace& space) {
  if (params.num_labels() != space.num_labels()) {
    throw DomainError("predict: model and label space disagree on |L|");
  }
  const LogitMap logits = forward(params, features);
  const std::size_t n = logits.dims().pixels();
  std::vector<Label> labels(n);
  for (std::size_t m = 0; m < n; ++m) labels[m] = static_cast<Label>(argmax(logits.row(m)));
  return SegMask(logits.dims(), std::move(labels), space);
}

}  // namespace wseg
