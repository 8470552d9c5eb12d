#include "wseg/synth_data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "wseg/rng.hpp"

namespace wseg {

namespace {

struct Rgb {
  double r, g, b;
};

// Indexed by label id; entry 0 unused (background is textured grey).
constexpr std::array<Rgb, kMaxSyntheticClasses + 1> kPalette = {{
    {0.5, 0.5, 0.5},
    {0.85, 0.15, 0.15},  // disc
    {0.15, 0.85, 0.15},  // ellipse
    {0.15, 0.15, 0.85},  // hexagon
    {0.85, 0.85, 0.15},  // plus
    {0.85, 0.15, 0.85},  // rectangle
    {0.15, 0.85, 0.85},  // ring
    {0.08, 0.08, 0.08},  // square
    {0.92, 0.92, 0.92},  // triangle
}};

struct Placement {
  double cx, cy, size;
};

// u, v are offsets from the shape centre in units of its size.
bool inside_shape(Label l, double u, double v) {
  const double au = std::abs(u);
  const double av = std::abs(v);
  switch (l) {
    case 1:  // disc
      return u * u + v * v <= 1.0;
    case 2:  // ellipse
      return (u / 1.3) * (u / 1.3) + (v / 0.7) * (v / 0.7) <= 1.0;
    case 3:  // hexagon
      return av <= 0.866 && 1.732 * au + av <= 1.732;
    case 4:  // plus
      return (au <= 0.35 && av <= 1.0) || (av <= 0.35 && au <= 1.0);
    case 5:  // rectangle
      return au <= 1.2 && av <= 0.6;
    case 6:  // ring
      return u * u + v * v <= 1.0 && u * u + v * v >= 0.25;
    case 7:  // square
      return au <= 0.85 && av <= 0.85;
    case 8:  // triangle
      return v <= 0.8 && au <= (v + 1.0) / 1.8;
    default:
      return false;
  }
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

void check_dims(Dims dims) {
  if (dims.height < kMinSyntheticSide || dims.width < kMinSyntheticSide) {
    throw DomainError("synthetic images need at least " + std::to_string(kMinSyntheticSide) +
                      " px per side");
  }
}

void check_class(Label l, const LabelSpace& space) {
  if (!space.is_foreground(l) || l > kMaxSyntheticClasses) {
    throw DomainError("no synthetic shape family for class " + std::to_string(l));
  }
}

// Grey base with per-pixel texture.
std::vector<double> textured_background(Rng& rng, Dims dims) {
  const double base = rng.uniform(0.4, 0.6);
  std::vector<double> rgb(dims.pixels() * 3);
  for (std::size_t m = 0; m < dims.pixels(); ++m) {
    const double shade = base + rng.normal(0.0, 0.12);
    for (int ch = 0; ch < 3; ++ch) rgb[m * 3 + ch] = clamp01(shade + rng.normal(0.0, 0.03));
  }
  return rgb;
}

// Paints the shape into `rgb` (and `gt` when non-null); returns pixels drawn.
std::size_t paint_shape(Rng& rng, Label shape, const Rgb& color, double texture,
                        const Placement& p, Dims dims, std::vector<double>& rgb,
                        std::vector<Label>* gt, Label gt_label) {
  const Rgb tint{clamp01(color.r + rng.normal(0.0, 0.04)), clamp01(color.g + rng.normal(0.0, 0.04)),
                 clamp01(color.b + rng.normal(0.0, 0.04))};
  std::size_t drawn = 0;
  for (int r = 0; r < dims.height; ++r) {
    for (int c = 0; c < dims.width; ++c) {
      const double u = (c + 0.5 - p.cx) / p.size;
      const double v = (r + 0.5 - p.cy) / p.size;
      if (!inside_shape(shape, u, v)) continue;
      const std::size_t m = static_cast<std::size_t>(r) * dims.width + c;
      rgb[m * 3 + 0] = clamp01(tint.r + rng.normal(0.0, texture));
      rgb[m * 3 + 1] = clamp01(tint.g + rng.normal(0.0, texture));
      rgb[m * 3 + 2] = clamp01(tint.b + rng.normal(0.0, texture));
      if (gt) (*gt)[m] = gt_label;
      ++drawn;
    }
  }
  return drawn;
}

void sample_source_size(Rng& rng, SceneRecord& rec) {
  rec.source_width = rng.integer(180, 520);
  rec.source_height = rng.integer(180, 520);
}

std::vector<double> box_blur(const std::vector<double>& in, Dims dims, int radius) {
  if (radius <= 0) return in;
  // Separable, clamped at the border.
  std::vector<double> tmp(in.size());
  std::vector<double> out(in.size());
  const double norm = 1.0 / (2 * radius + 1);
  for (int r = 0; r < dims.height; ++r) {
    for (int c = 0; c < dims.width; ++c) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        acc += in[static_cast<std::size_t>(r) * dims.width + std::clamp(c + k, 0, dims.width - 1)];
      }
      tmp[static_cast<std::size_t>(r) * dims.width + c] = acc * norm;
    }
  }
  for (int r = 0; r < dims.height; ++r) {
    for (int c = 0; c < dims.width; ++c) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        acc += tmp[static_cast<std::size_t>(std::clamp(r + k, 0, dims.height - 1)) * dims.width + c];
      }
      out[static_cast<std::size_t>(r) * dims.width + c] = clamp01(acc * norm);
    }
  }
  return out;
}

// Shift, flip and blur an indicator map.
CueMap corrupt_indicator(Rng& rng, const std::vector<double>& indicator, Dims dims,
                         const NoiseConfig& noise) {
  const int dx = static_cast<int>(std::lround(rng.normal(0.0, noise.boundary_jitter)));
  const int dy = static_cast<int>(std::lround(rng.normal(0.0, noise.boundary_jitter)));
  std::vector<double> out(indicator.size(), 0.0);
  for (int r = 0; r < dims.height; ++r) {
    for (int c = 0; c < dims.width; ++c) {
      const int sr = r - dy;
      const int sc = c - dx;
      if (sr < 0 || sr >= dims.height || sc < 0 || sc >= dims.width) continue;
      out[static_cast<std::size_t>(r) * dims.width + c] =
          indicator[static_cast<std::size_t>(sr) * dims.width + sc];
    }
  }
  if (noise.false_positive_rate > 0.0 || noise.false_negative_rate > 0.0) {
    for (double& v : out) {
      if (v > 0.5) {
        if (rng.bernoulli(noise.false_negative_rate)) v = 0.0;
      } else if (rng.bernoulli(noise.false_positive_rate)) {
        v = 1.0;
      }
    }
  }
  return CueMap(dims, box_blur(out, dims, noise.blur_radius));
}

double truncated_normal01(Rng& rng, double mean, double stddev) {
  for (int i = 0; i < 64; ++i) {
    const double v = rng.normal(mean, stddev);
    if (v >= 0.0 && v <= 1.0) return v;
  }
  return clamp01(mean);
}

std::string make_id(const char* split, std::size_t i) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%05zu", split, i);
  return buf;
}

// Indices ordered by descending score, ties by ascending record id.
void rank_by_score(std::vector<std::size_t>& idx, const std::vector<std::size_t>& score,
                   const auto& id_of) {
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (score[a] != score[b]) return score[a] > score[b];
    return id_of(a) < id_of(b);
  });
}

}  // namespace

const std::vector<std::string>& synthetic_class_names() {
  static const std::vector<std::string> names = {"disc",      "ellipse", "hexagon", "plus",
                                                 "rectangle", "ring",    "square",  "triangle"};
  return names;
}

LabelSpace synthetic_label_space(int num_classes) {
  if (num_classes < 1 || num_classes > kMaxSyntheticClasses) {
    throw DomainError("synthetic datasets support 1.." + std::to_string(kMaxSyntheticClasses) +
                      " classes");
  }
  const auto& all = synthetic_class_names();
  return LabelSpace(std::vector<std::string>(all.begin(), all.begin() + num_classes));
}

void FilterConfig::check() const {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (min_side < 0 || max_side < min_side) throw DomainError("invalid size bounds");
  if (!unit(min_attention_prob) || !unit(saliency_threshold) || !unit(attention_threshold) ||
      !unit(fg_ratio_min)) {
    throw DomainError("filter thresholds must lie in [0,1]");
  }
  if (top_k_per_class < 0 || m_step_top_n < 0) throw DomainError("filter caps must be >= 0");
  for (const auto& [label, k] : top_k_override) {
    if (k < 0) throw DomainError("per-class cap for class " + std::to_string(label) + " is negative");
  }
}

int FilterConfig::top_k_for(Label l) const {
  const auto it = top_k_override.find(l);
  return it == top_k_override.end() ? top_k_per_class : it->second;
}

FilterConfig FilterConfig::desk_scale() {
  FilterConfig cfg;
  cfg.top_k_per_class = 25;
  cfg.m_step_top_n = 0;
  return cfg;
}

void NoiseConfig::check() const {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!unit(false_positive_rate) || !unit(false_negative_rate)) {
    throw DomainError("noise rates must lie in [0,1]");
  }
  if (boundary_jitter < 0.0 || blur_radius < 0) throw DomainError("noise magnitudes must be >= 0");
}

NoiseConfig NoiseConfig::from_level(double level, std::uint64_t seed) {
  if (!(level >= 0.0 && level <= 1.0)) throw DomainError("noise level must lie in [0,1]");
  NoiseConfig n;
  n.boundary_jitter = 3.0 * level;
  n.false_positive_rate = 0.2 * level;
  n.false_negative_rate = 0.2 * level;
  n.blur_radius = static_cast<int>(std::lround(4.0 * level));
  n.seed = seed;
  return n;
}

SceneRecord generate_simple(std::uint64_t seed, Label object_class, const LabelSpace& space,
                            Dims dims, std::string id) {
  check_dims(dims);
  check_class(object_class, space);
  Rng rng(seed);
  SceneRecord rec{std::move(id), Image(dims, std::vector<double>(dims.pixels() * 3, 0.0)),
                  LabelSet({object_class}, space),
                  SegMask(dims, std::vector<Label>(dims.pixels(), kBackground), space), 0, 0};
  sample_source_size(rng, rec);

  const double side = std::min(dims.height, dims.width);
  const Placement p{dims.width * 0.5 + rng.uniform(-0.08, 0.08) * dims.width,
                    dims.height * 0.5 + rng.uniform(-0.08, 0.08) * dims.height,
                    side * rng.uniform(0.22, 0.32)};
  std::vector<double> rgb = textured_background(rng, dims);
  std::vector<Label> gt(dims.pixels(), kBackground);
  paint_shape(rng, object_class, kPalette[object_class], 0.03, p, dims, rgb, &gt, object_class);
  rec.image = Image(dims, std::move(rgb));
  rec.gt = SegMask(dims, std::move(gt), space);
  return rec;
}

SceneRecord generate_complex(std::uint64_t seed, const LabelSet& classes, const LabelSpace& space,
                             Dims dims, std::string id) {
  check_dims(dims);
  if (classes.size() < 1 || classes.size() > 4) {
    throw DomainError("complex scenes hold between 1 and 4 classes");
  }
  for (Label l : classes.ids()) check_class(l, space);
  Rng rng(seed);
  SceneRecord rec{std::move(id), Image(dims, std::vector<double>(dims.pixels() * 3, 0.0)), classes,
                  SegMask(dims, std::vector<Label>(dims.pixels(), kBackground), space), 0, 0};
  sample_source_size(rng, rec);

  std::vector<Label> draw_order = classes.ids();
  rng.shuffle(draw_order.begin(), draw_order.end());
  const double side = std::min(dims.height, dims.width);

  std::vector<double> rgb;
  std::vector<Label> gt;
  for (int attempt = 0;; ++attempt) {
    rgb = textured_background(rng, dims);
    gt.assign(dims.pixels(), kBackground);

    // Clutter: smooth, partly desaturated blobs in class-like colours.
    // Only classes absent from the scene lend their colour.
    std::vector<Label> absent;
    for (Label l = 1; l <= space.num_classes(); ++l) {
      if (!classes.contains(l)) absent.push_back(l);
    }
    const int clutter = absent.empty() ? 0 : rng.integer(2, 4);
    for (int i = 0; i < clutter; ++i) {
      const Label look = absent[rng.index(absent.size())];
      const Rgb& c = kPalette[look];
      const double mix = rng.uniform(0.6, 0.8);
      const Rgb faded{0.5 + mix * (c.r - 0.5), 0.5 + mix * (c.g - 0.5), 0.5 + mix * (c.b - 0.5)};
      const Placement p{rng.uniform(0.0, dims.width), rng.uniform(0.0, dims.height),
                        side * rng.uniform(0.08, 0.14)};
      paint_shape(rng, 1, faded, 0.03, p, dims, rgb, nullptr, kBackground);
    }

    std::vector<std::size_t> area;
    for (Label l : draw_order) {
      const double size = side * rng.uniform(0.15, 0.25);
      const Placement p{rng.uniform(size, dims.width - size), rng.uniform(size, dims.height - size),
                        size};
      area.push_back(paint_shape(rng, l, kPalette[l], 0.03, p, dims, rgb, &gt, l));
    }
    // Every declared class must stay at least partly visible.
    bool visible = true;
    for (std::size_t i = 0; i < draw_order.size(); ++i) {
      const auto shown = static_cast<std::size_t>(std::count(gt.begin(), gt.end(), draw_order[i]));
      if (shown == 0 || shown * 4 < area[i]) visible = false;
    }
    if (visible || attempt >= 50) break;
  }
  rec.image = Image(dims, std::move(rgb));
  rec.gt = SegMask(dims, std::move(gt), space);
  return rec;
}

CueRecord synth_cues(const SceneRecord& rec, Label object_class, const NoiseConfig& noise,
                     const LabelSpace& space) {
  noise.check();
  if (!rec.labels.contains(object_class)) {
    throw DomainError("synth_cues: class " + std::to_string(object_class) + " absent from record " +
                      rec.id);
  }
  const Dims dims = rec.gt.dims();
  std::vector<double> fg(dims.pixels());
  std::vector<double> cls(dims.pixels());
  for (std::size_t m = 0; m < dims.pixels(); ++m) {
    const Label g = rec.gt[m];
    fg[m] = (g != kBackground && !rec.gt.is_ignored(m)) ? 1.0 : 0.0;
    cls[m] = g == object_class ? 1.0 : 0.0;
  }
  Rng rng(derive_seed(noise.seed, "cues/" + rec.id));
  CueRecord out{rec.id,
                corrupt_indicator(rng, fg, dims, noise),
                corrupt_indicator(rng, cls, dims, noise),
                object_class,
                object_class,
                0.0};
  const bool correct = !rng.bernoulli(noise.false_positive_rate) || space.num_classes() == 1;
  if (!correct) {
    Label other = static_cast<Label>(rng.integer(1, space.num_classes() - 1));
    if (other >= object_class) ++other;
    out.predicted_class = other;
  }
  out.predicted_prob = truncated_normal01(rng, correct ? 0.8 : 0.3, 0.15);
  return out;
}

std::size_t cue_overlap(const CueRecord& cues, const FilterConfig& cfg) {
  return mask_intersection_area(binarize(cues.saliency, cfg.saliency_threshold),
                                binarize(cues.attention, cfg.attention_threshold));
}

std::vector<std::size_t> filter_simple(std::span<const SimpleSample> samples,
                                       const FilterConfig& cfg) {
  cfg.check();
  std::map<Label, std::vector<std::size_t>> by_class;
  std::vector<std::size_t> score(samples.size(), 0);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const SceneRecord& rec = samples[i].scene;
    const CueRecord& cues = samples[i].cues;
    if (rec.labels.size() != 1) throw DomainError("filter_simple: record " + rec.id + " is not single-object");
    const Label declared = rec.labels.ids().front();
    // (1) size, (2) classifier agreement, (3) classifier confidence.
    const int lo = std::min(rec.source_width, rec.source_height);
    const int hi = std::max(rec.source_width, rec.source_height);
    if (lo < cfg.min_side || hi > cfg.max_side) continue;
    if (cues.predicted_class != declared) continue;
    if (cues.predicted_prob < cfg.min_attention_prob) continue;
    score[i] = cue_overlap(cues, cfg);
    by_class[declared].push_back(i);
  }
  std::vector<std::size_t> kept;
  for (auto& [label, idx] : by_class) {
    rank_by_score(idx, score, [&](std::size_t i) -> const std::string& { return samples[i].scene.id; });
    const auto k = std::min(idx.size(), static_cast<std::size_t>(cfg.top_k_for(label)));
    kept.insert(kept.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
  }
  return kept;
}

bool passes_foreground_ratio(const SegMask& prediction, const FilterConfig& cfg) {
  const std::size_t total = prediction.dims().pixels();
  if (total == 0) return false;
  std::size_t fg = 0;
  for (std::size_t m = 0; m < total; ++m) {
    if (!prediction.is_ignored(m) && prediction[m] != kBackground) ++fg;
  }
  const double ratio = static_cast<double>(fg) / static_cast<double>(total);
  return !(ratio < cfg.fg_ratio_min);
}

std::vector<std::size_t> filter_complex(std::span<const SegMask> predictions,
                                        const FilterConfig& cfg) {
  cfg.check();
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (passes_foreground_ratio(predictions[i], cfg)) kept.push_back(i);
  }
  return kept;
}

std::vector<std::size_t> filter_complex(std::span<const SceneRecord> records,
                                        const SegmenterParams& model, const LabelSpace& space,
                                        const FilterConfig& cfg) {
  std::vector<SegMask> preds;
  preds.reserve(records.size());
  for (const auto& rec : records) preds.push_back(predict(model, extract_features(rec.image), space));
  return filter_complex(preds, cfg);
}

std::vector<std::size_t> refilter_simple_for_mstep(std::span<const SimpleSample> samples,
                                                   std::span<const std::size_t> candidates,
                                                   std::span<const SegMask> predictions,
                                                   std::size_t keep, const FilterConfig& cfg) {
  cfg.check();
  if (predictions.size() != samples.size()) {
    throw DomainError("refilter_simple_for_mstep: one prediction per sample required");
  }
  std::vector<std::size_t> score(samples.size(), 0);
  std::vector<std::size_t> idx(candidates.begin(), candidates.end());
  for (std::size_t i : idx) {
    const BinaryMask attention = binarize(samples[i].cues.attention, cfg.attention_threshold);
    const SegMask& pred = predictions[i];
    std::vector<std::uint8_t> fg(pred.dims().pixels());
    for (std::size_t m = 0; m < fg.size(); ++m) {
      fg[m] = (!pred.is_ignored(m) && pred[m] != kBackground) ? 1 : 0;
    }
    score[i] = mask_intersection_area(attention, BinaryMask(pred.dims(), std::move(fg)));
  }
  rank_by_score(idx, score, [&](std::size_t i) -> const std::string& { return samples[i].scene.id; });
  if (idx.size() > keep) idx.resize(keep);
  return idx;
}

std::vector<std::size_t> refilter_simple_for_mstep(std::span<const SimpleSample> samples,
                                                   std::span<const std::size_t> candidates,
                                                   const SegmenterParams& model,
                                                   const LabelSpace& space, std::size_t keep,
                                                   const FilterConfig& cfg) {
  std::vector<SegMask> preds;
  preds.reserve(samples.size());
  for (const auto& s : samples) preds.push_back(predict(model, extract_features(s.scene.image), space));
  return refilter_simple_for_mstep(samples, candidates, preds, keep, cfg);
}

SyntheticDataset generate_dataset(const DatasetConfig& cfg) {
  if (cfg.num_simple < 0 || cfg.num_complex < 0 || cfg.num_val < 0) {
    throw DomainError("record counts must be >= 0");
  }
  SyntheticDataset ds{synthetic_label_space(cfg.num_classes), {}, {}, {}};
  const NoiseConfig noise = NoiseConfig::from_level(cfg.noise_level, derive_seed(cfg.seed, "noise"));
  const int c = cfg.num_classes;

  const std::uint64_t simple_seed = derive_seed(cfg.seed, "simple");
  for (int i = 0; i < cfg.num_simple; ++i) {
    const Label cls = static_cast<Label>(i % c + 1);
    SceneRecord rec = generate_simple(simple_seed ^ static_cast<std::uint64_t>(i), cls, ds.space,
                                      cfg.dims, make_id("simple", i));
    CueRecord cues = synth_cues(rec, cls, noise, ds.space);
    ds.simple.push_back({std::move(rec), std::move(cues)});
  }

  auto complex_split = [&](const char* split, int count, std::vector<SceneRecord>& out) {
    const std::uint64_t split_seed = derive_seed(cfg.seed, split);
    for (int i = 0; i < count; ++i) {
      const std::uint64_t s = split_seed ^ static_cast<std::uint64_t>(i);
      Rng pick(derive_seed(s, "labels"));
      std::vector<Label> all(static_cast<std::size_t>(c));
      std::iota(all.begin(), all.end(), 1);
      pick.shuffle(all.begin(), all.end());
      const int k = pick.integer(1, std::min(3, c));
      LabelSet labels(std::vector<Label>(all.begin(), all.begin() + k), ds.space);
      out.push_back(generate_complex(s, labels, ds.space, cfg.dims, make_id(split, i)));
    }
  };
  complex_split("complex", cfg.num_complex, ds.complex);
  complex_split("val", cfg.num_val, ds.val);
  return ds;
}

}  // namespace wseg
