#pragma once

// Confusion-matrix evaluation with PASCAL-style per-class IoU and mIoU, plus
// the per-stage report rendered as a text table or JSON.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "wseg/core_types.hpp"

namespace wseg {

SegMask hard_segmentation(const ProbMap& probs, const LabelSpace& space);
SegMask hard_segmentation(const LogitMap& logits, const LabelSpace& space);

/// Rows index ground truth, columns index prediction.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_labels);

  int num_labels() const { return num_labels_; }
  std::uint64_t at(Label gt, Label pred) const {
    return counts_[static_cast<std::size_t>(gt) * num_labels_ + pred];
  }
  std::uint64_t total() const;

  /// Adds one count per pixel whose ground truth is not the ignore label.
  /// Predictions carrying the ignore label are skipped as well.
  void accumulate(const SegMask& pred, const SegMask& gt);
  void merge(const ConfusionMatrix& other);
  /// Sets a raw count; for building matrices directly.
  void set(Label gt, Label pred, std::uint64_t count);

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  int num_labels_;
  std::vector<std::uint64_t> counts_;
};

ConfusionMatrix accumulate(ConfusionMatrix cm, const SegMask& pred, const SegMask& gt);

struct IouScores {
  std::vector<std::optional<double>> per_class;  // nullopt: class absent from gt and pred
  double miou = 0.0;
};

/// IoU_l = TP / (TP + FP + FN); mIoU averages the classes with a nonzero
/// denominator.
IouScores iou_scores(const ConfusionMatrix& cm);

struct StageResult {
  std::string name;
  IouScores scores;
  std::vector<double> loss_curve;  // mean training loss per epoch
};

struct DatasetSizes {
  std::size_t simple_raw = 0;
  std::size_t simple_filtered = 0;
  std::size_t complex_raw = 0;
  std::size_t complex_filtered = 0;
  std::vector<std::size_t> mstep_simple;  // refiltered D(I) size per EM iteration
};

struct EmReport {
  std::vector<StageResult> stages;  // "Initial", "EM iter 1", ...
  DatasetSizes sizes;
};

/// Fixed-width table: one row per stage, one column per label plus mIoU,
/// percentages to one decimal. Absent classes print "-".
std::string report_table(const EmReport& report, const LabelSpace& space);

/// {"stages": [{"name", "per_class_iou", "miou", "loss_curve"}], "dataset_sizes": {...}}
/// Absent classes serialize as null. Two-space indent, trailing newline.
std::string report_json(const EmReport& report);
EmReport report_from_json(const std::string& text);

}  // namespace wseg
