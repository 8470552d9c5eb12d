#pragma once

// Reference likelihood model p(y|I; theta): a per-pixel linear softmax over
// fixed handcrafted features, trained with momentum SGD.

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "wseg/core_types.hpp"
#include "wseg/losses.hpp"

namespace wseg {

inline constexpr int kFeatureDim = 13;
inline constexpr const char* kFeatureVersion = "rgb-xy-local3x3-v1";

/// Per-pixel feature vectors phi(m), d per pixel, pixel-major.
class FeatureMap {
 public:
  FeatureMap(Dims dims, int dim, std::vector<float> values);

  Dims dims() const { return dims_; }
  int dim() const { return dim_; }
  std::span<const float> row(std::size_t m) const {
    return {values_.data() + m * dim_, static_cast<std::size_t>(dim_)};
  }
  std::span<const float> values() const { return values_; }

 private:
  Dims dims_;
  int dim_;
  std::vector<float> values_;
};

/// [1, R, G, B, x/W, y/H, 3x3 channel means, 3x3 channel std-devs]; the
/// neighbourhood is clamped at the image border.
FeatureMap extract_features(const Image& image);

/// Weight matrix W, |L| rows by d columns. Column 0 multiplies the constant
/// bias feature.
class SegmenterParams {
 public:
  SegmenterParams(int num_labels, int dim, std::vector<double> weights);
  static SegmenterParams zeros(int num_labels, int dim = kFeatureDim);

  int num_labels() const { return num_labels_; }
  int dim() const { return dim_; }
  double weight(Label l, int k) const { return weights_[static_cast<std::size_t>(l) * dim_ + k]; }
  std::span<const double> weights() const { return weights_; }
  std::span<double> mutable_weights() { return weights_; }

  bool operator==(const SegmenterParams&) const = default;

 private:
  int num_labels_;
  int dim_;
  std::vector<double> weights_;
};

/// f(m, l) = <W_l, phi(m)>.
LogitMap forward(const SegmenterParams& params, const FeatureMap& features);

ProbMap softmax(const LogitMap& logits);

/// dLoss/dW from dLoss/df, accumulated into `grad_out` (size |L| * d).
void accumulate_weight_gradient(const FeatureMap& features, std::span<const double> logit_grad,
                                int num_labels, std::span<double> grad_out);

struct OptConfig {
  double learning_rate = 0.001;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  double lr_decay_factor = 10.0;
  int lr_decay_every = 10;  // epochs
  int epochs = 20;
  int accumulation = 10;  // images per update
  // An epoch that raises the full-dataset loss is undone (weights and
  // momentum) and the step size halves for the remaining epochs.
  bool backtrack = false;
  std::uint64_t seed = 0;
  unsigned threads = 1;  // 0 = all hardware threads

  void check() const;
  double learning_rate_at(int epoch) const;
};

struct SgdState {
  std::vector<double> velocity;
};

/// v' = momentum v + grad + wd W (bias column excluded from decay);
/// W' = W - lr v'. Throws TrainingError on a non-finite gradient.
void sgd_step(SegmenterParams& params, std::span<const double> grad, SgdState& state,
              const OptConfig& cfg, int epoch = 0);

struct TrainingExample {
  std::string id;
  std::shared_ptr<const FeatureMap> features;
  ProbMap target;
};

struct TrainResult {
  SegmenterParams params;
  double initial_loss = 0.0;           // mean loss before the first update
  std::vector<double> epoch_losses;    // mean loss over the dataset after each epoch
  int rejected_epochs = 0;             // undone by backtracking
};

/// Mean combined loss of `params` over `examples`.
double mean_loss(const SegmenterParams& params, std::span<const TrainingExample> examples,
                 const LossConfig& loss_cfg, unsigned threads = 1);

/// Starts from `init` (zeros when absent), shuffles each epoch with a seeded
/// permutation, averages gradients over `accumulation` images per update.
TrainResult train(std::span<const TrainingExample> examples, const LossConfig& loss_cfg,
                  const OptConfig& opt_cfg, const SegmenterParams* init = nullptr);

/// Hard labels straight from the model (argmax of logits, ties to lowest id).
SegMask predict(const SegmenterParams& params, const FeatureMap& features,
                const LabelSpace& space);

}  // namespace wseg
