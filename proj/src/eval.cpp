#include "wseg/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "json.hpp"

namespace wseg {

namespace {

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", 100.0 * v);
  return buf;
}

}  // namespace

SegMask hard_segmentation(const ProbMap& probs, const LabelSpace& space) {
  if (probs.num_labels() != space.num_labels()) {
    throw DomainError("hard_segmentation: map width does not match label space");
  }
  const std::size_t n = probs.dims().pixels();
  std::vector<Label> labels(n);
  for (std::size_t m = 0; m < n; ++m) {
    labels[m] = probs.is_valid(m) ? static_cast<Label>(argmax(probs.row(m)))
                                  : space.ignore_label();
  }
  return SegMask(probs.dims(), std::move(labels), space);
}

SegMask hard_segmentation(const LogitMap& logits, const LabelSpace& space) {
  if (logits.num_labels() != space.num_labels()) {
    throw DomainError("hard_segmentation: map width does not match label space");
  }
  const std::size_t n = logits.dims().pixels();
  std::vector<Label> labels(n);
  for (std::size_t m = 0; m < n; ++m) labels[m] = static_cast<Label>(argmax(logits.row(m)));
  return SegMask(logits.dims(), std::move(labels), space);
}

ConfusionMatrix::ConfusionMatrix(int num_labels)
    : num_labels_(num_labels),
      counts_(static_cast<std::size_t>(num_labels) * num_labels, 0) {
  if (num_labels < 1) throw DomainError("confusion matrix needs at least one label");
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (auto c : counts_) t += c;
  return t;
}

void ConfusionMatrix::accumulate(const SegMask& pred, const SegMask& gt) {
  if (pred.dims() != gt.dims()) throw DomainError("accumulate: mask dimensions differ");
  const std::size_t n = gt.dims().pixels();
  for (std::size_t m = 0; m < n; ++m) {
    if (gt.is_ignored(m) || pred.is_ignored(m)) continue;
    const Label g = gt[m];
    const Label p = pred[m];
    if (g >= num_labels_ || p >= num_labels_) {
      throw DomainError("accumulate: label outside confusion matrix");
    }
    ++counts_[static_cast<std::size_t>(g) * num_labels_ + p];
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.num_labels_ != num_labels_) throw DomainError("merge: label counts differ");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

void ConfusionMatrix::set(Label gt, Label pred, std::uint64_t count) {
  counts_.at(static_cast<std::size_t>(gt) * num_labels_ + pred) = count;
}

ConfusionMatrix accumulate(ConfusionMatrix cm, const SegMask& pred, const SegMask& gt) {
  cm.accumulate(pred, gt);
  return cm;
}

IouScores iou_scores(const ConfusionMatrix& cm) {
  const int k = cm.num_labels();
  IouScores out;
  out.per_class.resize(static_cast<std::size_t>(k));
  double sum = 0.0;
  int included = 0;
  for (Label l = 0; l < k; ++l) {
    std::uint64_t row = 0;
    std::uint64_t col = 0;
    for (Label j = 0; j < k; ++j) {
      row += cm.at(l, j);
      col += cm.at(j, l);
    }
    const std::uint64_t tp = cm.at(l, l);
    const std::uint64_t denom = row + col - tp;
    if (denom == 0) continue;
    const double iou = static_cast<double>(tp) / static_cast<double>(denom);
    out.per_class[static_cast<std::size_t>(l)] = iou;
    sum += iou;
    ++included;
  }
  out.miou = included > 0 ? sum / included : 0.0;
  return out;
}

std::string report_table(const EmReport& report, const LabelSpace& space) {
  std::size_t stage_width = 5;  // "Stage"
  for (const auto& s : report.stages) stage_width = std::max(stage_width, s.name.size());
  std::vector<std::size_t> widths;
  for (const auto& name : space.names()) widths.push_back(std::max<std::size_t>(name.size(), 5));

  std::ostringstream os;
  auto cell = [&os](const std::string& text, std::size_t width) {
    os << ' ' << std::string(width - std::min(width, text.size()), ' ') << text;
  };
  os << "Stage" << std::string(stage_width - 5, ' ');
  for (std::size_t l = 0; l < widths.size(); ++l) cell(space.names()[l], widths[l]);
  cell("mIoU", 5);
  os << '\n';
  for (const auto& s : report.stages) {
    os << s.name << std::string(stage_width - s.name.size(), ' ');
    for (std::size_t l = 0; l < widths.size(); ++l) {
      const bool has = l < s.scores.per_class.size() && s.scores.per_class[l].has_value();
      cell(has ? percent(*s.scores.per_class[l]) : "-", widths[l]);
    }
    cell(percent(s.scores.miou), 5);
    os << '\n';
  }
  return os.str();
}

std::string report_json(const EmReport& report) {
  nlohmann::ordered_json j;
  j["stages"] = nlohmann::ordered_json::array();
  for (const auto& s : report.stages) {
    nlohmann::ordered_json st;
    st["name"] = s.name;
    auto per_class = nlohmann::ordered_json::array();
    for (const auto& v : s.scores.per_class) {
      per_class.push_back(v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr));
    }
    st["per_class_iou"] = per_class;
    st["miou"] = s.scores.miou;
    st["loss_curve"] = s.loss_curve;
    j["stages"].push_back(st);
  }
  j["dataset_sizes"] = {{"simple_raw", report.sizes.simple_raw},
                        {"simple_filtered", report.sizes.simple_filtered},
                        {"complex_raw", report.sizes.complex_raw},
                        {"complex_filtered", report.sizes.complex_filtered},
                        {"mstep_simple", report.sizes.mstep_simple}};
  return j.dump(2) + "\n";
}

EmReport report_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  EmReport report;
  for (const auto& st : j.at("stages")) {
    StageResult s;
    s.name = st.at("name").get<std::string>();
    for (const auto& v : st.at("per_class_iou")) {
      s.scores.per_class.push_back(v.is_null() ? std::nullopt
                                               : std::optional<double>(v.get<double>()));
    }
    s.scores.miou = st.at("miou").get<double>();
    if (st.contains("loss_curve")) s.loss_curve = st["loss_curve"].get<std::vector<double>>();
    report.stages.push_back(std::move(s));
  }
  if (j.contains("dataset_sizes")) {
    const auto& d = j["dataset_sizes"];
    report.sizes.simple_raw = d.value("simple_raw", std::size_t{0});
    report.sizes.simple_filtered = d.value("simple_filtered", std::size_t{0});
    report.sizes.complex_raw = d.value("complex_raw", std::size_t{0});
    report.sizes.complex_filtered = d.value("complex_filtered", std::size_t{0});
    report.sizes.mstep_simple = d.value("mstep_simple", std::vector<std::size_t>{});
  }
  return report;
}

}  // namespace wseg
