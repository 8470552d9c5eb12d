// Acceptance checks. One PASS/FAIL line per criterion; exit status is the
// number of failures (capped at 1).

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <unistd.h>

#include "cli.hpp"
#include "wseg/dataset_io.hpp"
#include "wseg/eval.hpp"
#include "wseg/grad_check.hpp"
#include "wseg/losses.hpp"
#include "wseg/posterior.hpp"
#include "wseg/rng.hpp"
#include "wseg/segmenter.hpp"
#include "wseg/synth_data.hpp"

using namespace wseg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome gradient_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  const GradCheckReport r = run_grad_check(100, 42, 1e-4);
  const double secs = seconds_since(t0);
  return {r.trials >= 100 && r.worst_error < 1e-4 && secs < 30.0,
          std::to_string(r.trials) + " instances, worst relative error " + fmt(r.worst_error) + ", " +
              fmt(secs) + " s"};
}

Outcome e_step_contracts() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(7);
  int bad = 0;
  double worst_sum = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto space = LabelSpace::with_classes(rng.integer(1, 8));
    const Dims d{rng.integer(1, 8), rng.integer(1, 8)};
    std::vector<Label> ids;
    for (Label l = 1; l <= space.num_classes(); ++l) {
      if (rng.bernoulli(0.4)) ids.push_back(l);
    }
    if (ids.empty()) ids.push_back(rng.integer(1, space.num_classes()));
    const LabelSet z(ids, space);
    std::vector<double> f(d.pixels() * space.num_labels());
    for (double& v : f) v = rng.normal(0.0, 4.0);
    const ProbMap p = regularized_posterior(LogitMap(d, space.num_labels(), f), z, space);
    const ProbMap t = mixed_target(p, HeuristicConfig{rng.uniform()});
    for (std::size_t m = 0; m < d.pixels(); ++m) {
      double s = 0, st = 0;
      for (Label l = 0; l < space.num_labels(); ++l) {
        s += p.at(m, l);
        st += t.at(m, l);
        if (l != 0 && !z.contains(l) && p.at(m, l) != 0.0) ++bad;
        if (t.at(m, l) < 0.0) ++bad;
      }
      worst_sum = std::max({worst_sum, std::abs(s - 1.0), std::abs(st - 1.0)});
      if (argmax(p.row(m)) != argmax(t.row(m))) ++bad;
    }
  }
  const double secs = seconds_since(t0);
  return {bad == 0 && worst_sum <= 1e-9 && secs < 5.0,
          "1000 pairs, " + std::to_string(bad) + " violations, worst |sum-1| " + fmt(worst_sum) + ", " +
              fmt(secs) + " s"};
}

Outcome heuristic_grid() {
  int bad = 0, cells = 0;
  for (double eta : {0.0, 0.05, 0.5, 1.0}) {
    for (int i = 0; i <= 100; ++i) {
      const double r = i / 100.0;
      const double want = r >= eta ? 1.0 : r;
      ++cells;
      if (epsilon_from_heuristic(r, HeuristicConfig{eta}) != want) ++bad;
    }
  }
  return {bad == 0, std::to_string(cells) + " grid points, " + std::to_string(bad) + " mismatches"};
}

Outcome iou_oracle() {
  Rng rng(11);
  constexpr int L = 4;
  const Dims d{8, 8};
  double worst = 0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> tl(d.pixels()), pl(d.pixels());
    std::vector<double> t(d.pixels() * L, 0.0), f(d.pixels() * L, 0.0);
    for (std::size_t m = 0; m < d.pixels(); ++m) {
      tl[m] = rng.integer(0, L - 1);
      pl[m] = rng.bernoulli(0.6) ? tl[m] : rng.integer(0, L - 1);
      t[m * L + tl[m]] = 1.0;
      f[m * L + pl[m]] = 80.0;  // softmax is one-hot to within e^-80
    }
    double sum = 0;
    int included = 0;
    for (int l = 0; l < L; ++l) {
      int inter = 0, uni = 0;
      for (std::size_t m = 0; m < d.pixels(); ++m) {
        inter += tl[m] == l && pl[m] == l;
        uni += tl[m] == l || pl[m] == l;
      }
      if (uni == 0) continue;
      sum += static_cast<double>(inter) / uni;
      ++included;
    }
    const double brute = sum / included;
    worst = std::max(worst, std::abs(prob_iou_gain(ProbMap(d, L, t), LogitMap(d, L, f)).value - brute));
  }
  return {worst <= 1e-12, "200 pairs, worst |gain - set IoU| " + fmt(worst)};
}

Outcome filtering_fidelity() {
  const LabelSpace space = LabelSpace::with_classes(2);
  const Dims d{10, 10};
  auto sample = [&](std::string id, int w, int h, Label pred, double prob, int overlap, double on) {
    std::vector<double> s(d.pixels(), 0.0), a(d.pixels(), 0.0);
    for (int i = 0; i < overlap; ++i) s[i] = a[i] = on;
    SceneRecord rec{id, Image(d, std::vector<double>(d.pixels() * 3, 0.5)), LabelSet({1}, space),
                    SegMask(d, std::vector<Label>(d.pixels(), 0), space), w, h};
    return SimpleSample{std::move(rec), CueRecord{id, CueMap(d, s), CueMap(d, a), 1, pred, prob}};
  };
  auto kept = [](const std::vector<SimpleSample>& s, const FilterConfig& cfg) {
    std::string out;
    for (auto i : filter_simple(s, cfg)) out += s[i].scene.id;
    return out;
  };
  const FilterConfig cfg;
  int bad = 0;
  auto expect = [&](bool ok) { bad += !ok; };

  // sides: 199 and 501 out, 200 and 500 in
  expect(kept({sample("a", 199, 300, 1, 0.9, 5, 1), sample("b", 200, 300, 1, 0.9, 5, 1),
               sample("c", 500, 300, 1, 0.9, 5, 1), sample("d", 300, 501, 1, 0.9, 5, 1)},
              cfg) == "bc");
  // prediction confidence: 0.2 kept, just below dropped, wrong class dropped
  expect(kept({sample("a", 300, 300, 1, 0.2, 5, 1), sample("b", 300, 300, 1, 0.19999, 5, 1),
               sample("c", 300, 300, 2, 0.9, 5, 1)},
              cfg) == "a");
  // binarization is strict at 0.5
  const auto at_half = sample("a", 300, 300, 1, 0.9, 40, 0.5);
  const auto above = sample("a", 300, 300, 1, 0.9, 40, 0.5000001);
  expect(cue_overlap(at_half.cues, cfg) == 0);
  expect(cue_overlap(above.cues, cfg) == 40);
  // top-k with the smaller id winning a tie
  FilterConfig top2 = cfg;
  top2.top_k_per_class = 2;
  expect(kept({sample("c", 300, 300, 1, 0.9, 20, 1), sample("b", 300, 300, 1, 0.9, 20, 1),
               sample("a", 300, 300, 1, 0.9, 10, 1), sample("d", 300, 300, 1, 0.9, 30, 1)},
              top2) == "db");
  // foreground ratio: 4/100 dropped, 5/100 kept
  auto fg = [&](int n) {
    std::vector<Label> l(d.pixels(), 0);
    for (int i = 0; i < n; ++i) l[i] = 1;
    return SegMask(d, l, space);
  };
  expect(!passes_foreground_ratio(fg(4), cfg));
  expect(passes_foreground_ratio(fg(5), cfg));
  return {bad == 0, std::to_string(bad) + " boundary violations"};
}

int invoke(std::vector<std::string> args, std::string* out = nullptr) {
  std::ostringstream o, e;
  const int code = cli::run(args, o, e);
  if (out) *out = o.str();
  if (code != 0) std::cerr << e.str();
  return code;
}

fs::path run_pipeline(const fs::path& dir, double* secs) {
  fs::remove_all(dir);
  const std::string config = std::string(WSEG_SOURCE_DIR) + "/configs/desk_scale.ini";
  const auto t0 = std::chrono::steady_clock::now();
  if (invoke({"gen-data", "--out", dir.string(), "--seed", "42", "--classes", "6", "--simple", "300",
           "--complex", "150", "--val", "100", "--noise-level", "0.5"}) != 0) {
    return {};
  }
  if (invoke({"run-em", "--out", dir.string(), "--seed", "42", "--iterations", "2", "--config", config}) !=
      0) {
    return {};
  }
  *secs = seconds_since(t0);
  return dir;
}

Outcome em_trend(const fs::path& dir, double secs) {
  if (dir.empty()) return {false, "pipeline failed"};
  const EmReport r = report_from_json(slurp(dir / "reports" / "em_report.json"));
  if (r.stages.size() != 3) return {false, "expected 3 stages"};
  const double init = r.stages[0].scores.miou, last = r.stages[2].scores.miou;
  bool monotone = true;
  for (int k = 1; k <= 2; ++k) {
    const auto& c = r.stages[k].loss_curve;
    for (std::size_t e = 1; e < c.size(); ++e) monotone = monotone && c[e] <= c[e - 1];
  }
  const bool a = init >= 0.70, b = last >= init;
  return {a && b && monotone && secs < 300.0,
          "initial " + fmt(init) + (a ? "" : " (<0.70)") + ", iter1 " + fmt(r.stages[1].scores.miou) +
              ", iter2 " + fmt(last) + (b ? "" : " (< initial)") + ", M-step losses " +
              (monotone ? "non-increasing" : "INCREASE") + ", " + fmt(secs) + " s"};
}

Outcome determinism(const fs::path& a, const fs::path& b) {
  if (a.empty() || b.empty()) return {false, "pipeline failed"};
  int files = 0, diff = 0;
  for (const char* sub : {"checkpoints", "reports"}) {
    for (const auto& entry : fs::directory_iterator(a / sub)) {
      ++files;
      const fs::path other = b / sub / entry.path().filename();
      if (!fs::exists(other) || slurp(entry.path()) != slurp(other)) ++diff;
    }
  }
  return {files > 0 && diff == 0, std::to_string(files) + " files compared, " + std::to_string(diff) +
                                      " differ"};
}

Outcome convex_sanity() {
  const auto space = LabelSpace::with_classes(1);
  std::vector<TrainingExample> toy;
  for (int i = 0; i < 10; ++i) {
    const Dims d{8, 8};
    const int split = 2 + i % 5;
    std::vector<double> rgb(d.pixels() * 3), target(d.pixels() * 2);
    for (std::size_t m = 0; m < d.pixels(); ++m) {
      const bool fg = static_cast<int>(m % 8) < split;
      rgb[m * 3] = fg ? 0.9 : 0.1;
      rgb[m * 3 + 1] = 0.2;
      rgb[m * 3 + 2] = fg ? 0.1 : 0.9;
      target[m * 2 + 1] = fg ? 1.0 : 0.0;
      target[m * 2] = fg ? 0.0 : 1.0;
    }
    toy.push_back({"toy" + std::to_string(i),
                   std::make_shared<const FeatureMap>(extract_features(Image(d, rgb))), ProbMap(d, 2, target)});
  }
  LossConfig ce;
  ce.iou_weight = 0.0;
  OptConfig opt;
  opt.learning_rate = 1e-3;
  opt.epochs = 5;
  const TrainResult r = train(toy, ce, opt);
  bool ok = r.epoch_losses.size() == 5;
  double prev = r.initial_loss;
  std::string curve = fmt(prev);
  for (double l : r.epoch_losses) {
    ok = ok && l < prev;
    prev = l;
    curve += " " + fmt(l);
  }
  return {ok, "loss " + curve};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](const std::string& name, const Outcome& o) {
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
    failures += !o.pass;
  };
  report("gradient correctness", gradient_correctness());
  report("E-step contracts", e_step_contracts());
  report("relative heuristic grid", heuristic_grid());
  report("IoU oracle equivalence", iou_oracle());
  report("filtering fidelity", filtering_fidelity());

  const fs::path root = fs::temp_directory_path() / ("wseg_acceptance_" + std::to_string(::getpid()));
  double secs_a = 0, secs_b = 0;
  const fs::path a = run_pipeline(root / "a", &secs_a);
  report("end-to-end EM trend", em_trend(a, secs_a));
  const fs::path b = run_pipeline(root / "b", &secs_b);
  report("determinism", determinism(a, b));
  report("convex sanity", convex_sanity());
  fs::remove_all(root);
  return failures == 0 ? 0 : 1;
}
