#include "wseg/core_types.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace wseg {

namespace {

void require_size(std::size_t actual, std::size_t expected, const char* what) {
  if (actual != expected) {
    std::ostringstream os;
    os << what << ": expected " << expected << " values, got " << actual;
    throw DomainError(os.str());
  }
}

void require_dims(Dims dims, const char* what) {
  if (dims.height < 0 || dims.width < 0) {
    throw DomainError(std::string(what) + ": negative dimensions");
  }
}

}  // namespace

LabelSpace::LabelSpace(std::vector<std::string> class_names, Label ignore_label)
    : ignore_label_(ignore_label) {
  if (class_names.empty()) {
    throw DomainError("label space needs at least one foreground class");
  }
  names_.reserve(class_names.size() + 1);
  names_.emplace_back("background");
  for (auto& n : class_names) names_.push_back(std::move(n));
  if (ignore_label_ >= 0 && ignore_label_ < num_labels()) {
    throw DomainError("ignore label " + std::to_string(ignore_label_) +
                      " collides with a class id");
  }
}

LabelSpace LabelSpace::with_classes(int num_classes, Label ignore_label) {
  if (num_classes < 1) throw DomainError("label space needs at least one class");
  std::vector<std::string> names;
  for (int i = 1; i <= num_classes; ++i) names.push_back("class" + std::to_string(i));
  return LabelSpace(std::move(names), ignore_label);
}

const std::string& LabelSpace::name(Label l) const {
  if (!is_label(l)) throw DomainError("label " + std::to_string(l) + " out of range");
  return names_[static_cast<std::size_t>(l)];
}

LabelSet::LabelSet(std::vector<Label> ids, const LabelSpace& space) : ids_(std::move(ids)) {
  std::sort(ids_.begin(), ids_.end());
  ids_.erase(std::unique(ids_.begin(), ids_.end()), ids_.end());
  if (ids_.empty()) throw DomainError("label set must be nonempty");
  for (Label l : ids_) {
    if (!space.is_foreground(l)) {
      throw DomainError("label set member " + std::to_string(l) +
                        " is not a foreground class");
    }
  }
}

bool LabelSet::contains(Label l) const {
  return std::binary_search(ids_.begin(), ids_.end(), l);
}

CueMap::CueMap(Dims dims, std::vector<double> values)
    : dims_(dims), values_(std::move(values)) {
  require_dims(dims_, "cue map");
  require_size(values_.size(), dims_.pixels(), "cue map");
  for (std::size_t m = 0; m < values_.size(); ++m) {
    // NaN fails both comparisons' negation, so test the accepted range.
    if (!(values_[m] >= 0.0 && values_[m] <= 1.0)) {
      throw DomainError("cue map value outside [0,1] at pixel " + std::to_string(m));
    }
  }
}

CueMap CueMap::filled(Dims dims, double value) {
  return CueMap(dims, std::vector<double>(dims.pixels(), value));
}

LogitMap::LogitMap(Dims dims, int num_labels, std::vector<double> values)
    : dims_(dims), num_labels_(num_labels), values_(std::move(values)) {
  require_dims(dims_, "logit map");
  if (num_labels_ < 1) throw DomainError("logit map needs at least one label");
  require_size(values_.size(), dims_.pixels() * num_labels_, "logit map");
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      throw DomainError("non-finite logit at index " + std::to_string(i));
    }
  }
}

LogitMap LogitMap::zeros(Dims dims, int num_labels) {
  return LogitMap(dims, num_labels, std::vector<double>(dims.pixels() * num_labels, 0.0));
}

LogitMap LogitMap::with_value(std::size_t index, double value) const {
  std::vector<double> v = values_;
  v.at(index) = value;
  return LogitMap(dims_, num_labels_, std::move(v));
}

ProbMap::ProbMap(Dims dims, int num_labels, std::vector<double> values,
                 std::vector<std::uint8_t> valid)
    : dims_(dims), num_labels_(num_labels), values_(std::move(values)), valid_(std::move(valid)) {
  require_dims(dims_, "prob map");
  if (num_labels_ < 1) throw DomainError("prob map needs at least one label");
  require_size(values_.size(), dims_.pixels() * num_labels_, "prob map");
  if (!valid_.empty()) require_size(valid_.size(), dims_.pixels(), "prob map valid flags");
}

std::size_t ProbMap::valid_count() const {
  if (valid_.empty()) return dims_.pixels();
  return static_cast<std::size_t>(
      std::count_if(valid_.begin(), valid_.end(), [](std::uint8_t v) { return v != 0; }));
}

SegMask::SegMask(Dims dims, std::vector<Label> labels, const LabelSpace& space)
    : dims_(dims), labels_(std::move(labels)), ignore_label_(space.ignore_label()) {
  require_dims(dims_, "segmentation mask");
  require_size(labels_.size(), dims_.pixels(), "segmentation mask");
  for (std::size_t m = 0; m < labels_.size(); ++m) {
    if (!space.is_label(labels_[m]) && labels_[m] != ignore_label_) {
      throw DomainError("mask label " + std::to_string(labels_[m]) + " at pixel " +
                        std::to_string(m) + " is outside the label space");
    }
  }
}

BinaryMask::BinaryMask(Dims dims, std::vector<std::uint8_t> bits)
    : dims_(dims), bits_(std::move(bits)) {
  require_dims(dims_, "binary mask");
  require_size(bits_.size(), dims_.pixels(), "binary mask");
  for (auto& b : bits_) b = b != 0 ? 1 : 0;
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

Image::Image(Dims dims, std::vector<double> rgb) : dims_(dims), rgb_(std::move(rgb)) {
  require_dims(dims_, "image");
  require_size(rgb_.size(), dims_.pixels() * 3, "image");
  for (double v : rgb_) {
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError("image channel value outside [0,1]");
  }
}

std::vector<double> one_hot(Label label, const LabelSpace& space) {
  if (!space.is_label(label)) {
    throw DomainError("one_hot: label " + std::to_string(label) + " out of range");
  }
  std::vector<double> out(static_cast<std::size_t>(space.num_labels()), 0.0);
  out[static_cast<std::size_t>(label)] = 1.0;
  return out;
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

void softmax_row(std::span<const double> logits, std::span<double> out) {
  const double shift = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t l = 0; l < logits.size(); ++l) {
    out[l] = std::exp(logits[l] - shift);
    total += out[l];
  }
  for (std::size_t l = 0; l < logits.size(); ++l) out[l] /= total;
}

SimplexReport validate(const ProbMap& map, double tolerance) {
  const std::size_t n = map.dims().pixels();
  for (std::size_t m = 0; m < n; ++m) {
    if (!map.is_valid(m)) continue;
    auto row = map.row(m);
    double sum = 0.0;
    for (std::size_t l = 0; l < row.size(); ++l) {
      if (!(row[l] >= 0.0)) {
        std::ostringstream os;
        os << "pixel " << m << ": entry " << l << " = " << row[l] << " is negative";
        return {false, m, os.str()};
      }
      sum += row[l];
    }
    if (!(std::abs(sum - 1.0) <= tolerance)) {
      std::ostringstream os;
      os << "pixel " << m << ": mass sums to " << sum;
      return {false, m, os.str()};
    }
  }
  return {};
}

}  // namespace wseg
