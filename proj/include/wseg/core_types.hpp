#pragma once

// Label space and the dense per-pixel maps shared by every stage of the
// pipeline. All maps are row-major: pixel index m = row * width + col.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace wseg {

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised when optimization produces non-finite values.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Label = int;

inline constexpr Label kBackground = 0;
inline constexpr Label kDefaultIgnoreLabel = 255;

struct Dims {
  int height = 0;
  int width = 0;

  std::size_t pixels() const {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  }
  bool operator==(const Dims&) const = default;
};

/// Background (id 0) plus c foreground classes, ids 1..c.
class LabelSpace {
 public:
  /// `class_names` lists the foreground classes only; id i+1 gets name i.
  explicit LabelSpace(std::vector<std::string> class_names,
                      Label ignore_label = kDefaultIgnoreLabel);

  /// Generic names "class1".."classN".
  static LabelSpace with_classes(int num_classes,
                                 Label ignore_label = kDefaultIgnoreLabel);

  int num_classes() const { return static_cast<int>(names_.size()) - 1; }
  int num_labels() const { return static_cast<int>(names_.size()); }
  Label ignore_label() const { return ignore_label_; }

  bool is_label(Label l) const { return l >= 0 && l < num_labels(); }
  bool is_foreground(Label l) const { return l >= 1 && l < num_labels(); }

  /// Name of label l; id 0 is "background".
  const std::string& name(Label l) const;
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
  Label ignore_label_;
};

/// Image-level label set z: the foreground classes present in an image.
class LabelSet {
 public:
  LabelSet(std::vector<Label> ids, const LabelSpace& space);

  bool contains(Label l) const;
  std::size_t size() const { return ids_.size(); }
  /// Sorted ascending, unique.
  const std::vector<Label>& ids() const { return ids_; }

  bool operator==(const LabelSet&) const = default;

 private:
  std::vector<Label> ids_;
};

/// Per-pixel probability field in [0, 1] (saliency, attention, fused cue).
class CueMap {
 public:
  CueMap(Dims dims, std::vector<double> values);
  static CueMap filled(Dims dims, double value);

  Dims dims() const { return dims_; }
  double operator[](std::size_t m) const { return values_[m]; }
  double at(int row, int col) const {
    return values_[static_cast<std::size_t>(row) * dims_.width + col];
  }
  std::span<const double> values() const { return values_; }

 private:
  Dims dims_;
  std::vector<double> values_;
};

/// Unnormalized per-pixel scores f(y_m = l | I; theta), |L| per pixel.
class LogitMap {
 public:
  LogitMap(Dims dims, int num_labels, std::vector<double> values);
  static LogitMap zeros(Dims dims, int num_labels);

  Dims dims() const { return dims_; }
  int num_labels() const { return num_labels_; }
  std::span<const double> row(std::size_t m) const {
    return {values_.data() + m * num_labels_,
            static_cast<std::size_t>(num_labels_)};
  }
  double at(std::size_t m, Label l) const { return values_[m * num_labels_ + l]; }
  std::span<const double> values() const { return values_; }

  /// Copy with a single coordinate replaced; used by gradient checks.
  LogitMap with_value(std::size_t index, double value) const;

 private:
  Dims dims_;
  int num_labels_;
  std::vector<double> values_;
};

/// Per-pixel distribution over the label space. Pixels whose valid flag is
/// false carry the ignore label and take no part in losses or metrics.
///
/// Construction checks shape only; use validate() for the simplex invariant.
class ProbMap {
 public:
  /// An empty `valid` vector marks every pixel valid.
  ProbMap(Dims dims, int num_labels, std::vector<double> values,
          std::vector<std::uint8_t> valid = {});

  Dims dims() const { return dims_; }
  int num_labels() const { return num_labels_; }
  std::span<const double> row(std::size_t m) const {
    return {values_.data() + m * num_labels_,
            static_cast<std::size_t>(num_labels_)};
  }
  double at(std::size_t m, Label l) const { return values_[m * num_labels_ + l]; }
  bool is_valid(std::size_t m) const { return valid_.empty() || valid_[m] != 0; }
  std::size_t valid_count() const;
  std::span<const double> values() const { return values_; }
  /// Per-pixel flags; empty when every pixel is valid.
  const std::vector<std::uint8_t>& valid_flags() const { return valid_; }

 private:
  Dims dims_;
  int num_labels_;
  std::vector<double> values_;
  std::vector<std::uint8_t> valid_;
};

/// Hard per-pixel labels in [0, c] or the ignore label.
class SegMask {
 public:
  SegMask(Dims dims, std::vector<Label> labels, const LabelSpace& space);

  Dims dims() const { return dims_; }
  Label operator[](std::size_t m) const { return labels_[m]; }
  Label at(int row, int col) const {
    return labels_[static_cast<std::size_t>(row) * dims_.width + col];
  }
  Label ignore_label() const { return ignore_label_; }
  bool is_ignored(std::size_t m) const { return labels_[m] == ignore_label_; }
  std::span<const Label> labels() const { return labels_; }

 private:
  Dims dims_;
  std::vector<Label> labels_;
  Label ignore_label_;
};

/// Two-valued mask produced by thresholding a cue map.
class BinaryMask {
 public:
  BinaryMask(Dims dims, std::vector<std::uint8_t> bits);

  Dims dims() const { return dims_; }
  bool operator[](std::size_t m) const { return bits_[m] != 0; }
  std::size_t count() const;

 private:
  Dims dims_;
  std::vector<std::uint8_t> bits_;
};

/// RGB image with channel values in [0, 1], stored pixel-major (m * 3 + ch).
class Image {
 public:
  Image(Dims dims, std::vector<double> rgb);

  Dims dims() const { return dims_; }
  double at(std::size_t m, int channel) const { return rgb_[m * 3 + channel]; }
  std::span<const double> values() const { return rgb_; }

 private:
  Dims dims_;
  std::vector<double> rgb_;
};

/// Dirac distribution at `label`.
std::vector<double> one_hot(Label label, const LabelSpace& space);

/// Index of the largest entry; ties resolve to the lowest index.
std::size_t argmax(std::span<const double> values);

/// Numerically stable softmax of one pixel's logits into `out`.
void softmax_row(std::span<const double> logits, std::span<double> out);

struct SimplexReport {
  bool ok = true;
  std::optional<std::size_t> pixel;  // first offending pixel
  std::string message;

  explicit operator bool() const { return ok; }
};

/// Checks that every valid pixel is a distribution: entries >= 0 and summing
/// to one within `tolerance`.
SimplexReport validate(const ProbMap& map, double tolerance = 1e-9);

}  // namespace wseg
