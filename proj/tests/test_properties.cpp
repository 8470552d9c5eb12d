// Randomized invariants across modules. Each case draws its own inputs from a
// fixed seed so failures reproduce.

#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "wseg/cue_fusion.hpp"
#include "wseg/eval.hpp"
#include "wseg/losses.hpp"
#include "wseg/posterior.hpp"
#include "wseg/rng.hpp"

using namespace wseg;

namespace {

LogitMap random_logits(Rng& rng, Dims d, int L, double scale) {
  std::vector<double> v(d.pixels() * L);
  for (double& x : v) x = rng.normal(0.0, scale);
  return LogitMap(d, L, v);
}

LabelSet random_labels(Rng& rng, const LabelSpace& space) {
  std::vector<Label> ids;
  for (Label l = 1; l <= space.num_classes(); ++l) {
    if (rng.bernoulli(0.5)) ids.push_back(l);
  }
  if (ids.empty()) ids.push_back(rng.integer(1, space.num_classes()));
  return LabelSet(ids, space);
}

Dims random_dims(Rng& rng) { return {rng.integer(1, 6), rng.integer(1, 6)}; }

}  // namespace

TEST_CASE("posterior is a distribution over background and present classes") {
  Rng rng(101);
  for (int trial = 0; trial < 200; ++trial) {
    const auto space = LabelSpace::with_classes(rng.integer(1, 6));
    const Dims d = random_dims(rng);
    const LabelSet z = random_labels(rng, space);
    const ProbMap p = regularized_posterior(random_logits(rng, d, space.num_labels(), 5.0), z, space);
    CHECK(validate(p).ok);
    for (std::size_t m = 0; m < d.pixels(); ++m) {
      for (Label l = 1; l < space.num_labels(); ++l) {
        if (!z.contains(l)) CHECK(p.at(m, l) == 0.0);
      }
    }
  }
}

TEST_CASE("posterior is invariant to a constant shift of each pixel's logits") {
  Rng rng(102);
  for (int trial = 0; trial < 100; ++trial) {
    const auto space = LabelSpace::with_classes(4);
    const Dims d = random_dims(rng);
    const LabelSet z = random_labels(rng, space);
    const LogitMap f = random_logits(rng, d, 5, 3.0);
    std::vector<double> shifted(f.values().begin(), f.values().end());
    for (std::size_t m = 0; m < d.pixels(); ++m) {
      const double c = rng.uniform(-50.0, 50.0);
      for (int l = 0; l < 5; ++l) shifted[m * 5 + l] += c;
    }
    const ProbMap a = regularized_posterior(f, z, space);
    const ProbMap b = regularized_posterior(LogitMap(d, 5, shifted), z, space);
    for (std::size_t i = 0; i < a.values().size(); ++i) {
      CHECK(a.values()[i] == doctest::Approx(b.values()[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("extreme logits stay finite") {
  const auto space = LabelSpace::with_classes(2);
  const ProbMap p = regularized_posterior(LogitMap({1, 2}, 3, {800, -800, 0, -900, -900, -901}),
                                          LabelSet({1, 2}, space), space);
  CHECK(validate(p).ok);
  CHECK(p.at(0, 0) == 1.0);
}

TEST_CASE("mixed target keeps the argmax and sharpens it") {
  Rng rng(103);
  for (int trial = 0; trial < 200; ++trial) {
    const auto space = LabelSpace::with_classes(rng.integer(1, 5));
    const Dims d = random_dims(rng);
    const HeuristicConfig h{rng.uniform()};
    const ProbMap p = regularized_posterior(random_logits(rng, d, space.num_labels(), 2.0),
                                            random_labels(rng, space), space);
    const ProbMap t = mixed_target(p, h);
    CHECK(validate(t).ok);
    for (std::size_t m = 0; m < d.pixels(); ++m) {
      const std::size_t best = argmax(p.row(m));
      CHECK(argmax(t.row(m)) == best);
      CHECK(t.at(m, static_cast<Label>(best)) >= p.at(m, static_cast<Label>(best)));
      // zero mass stays zero
      for (Label l = 0; l < space.num_labels(); ++l) {
        if (p.at(m, l) == 0.0) CHECK(t.at(m, l) == 0.0);
      }
    }
  }
}

TEST_CASE("epsilon is non-decreasing in r and bounded by 1") {
  Rng rng(104);
  for (int trial = 0; trial < 50; ++trial) {
    const HeuristicConfig h{rng.uniform()};
    double prev = -1;
    for (int i = 0; i <= 200; ++i) {
      const double e = epsilon_from_heuristic(i / 200.0, h);
      CHECK(e >= prev);
      CHECK(e <= 1.0);
      CHECK(e >= i / 200.0);
      prev = e;
    }
  }
}

TEST_CASE("relative margin lies in [0, 1]") {
  Rng rng(105);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> p(static_cast<std::size_t>(rng.integer(2, 7)));
    double s = 0;
    for (double& v : p) s += v = rng.uniform();
    for (double& v : p) v /= s;
    const double r = relative_margin(p);
    CHECK(r >= 0.0);
    CHECK(r <= 1.0);
  }
}

TEST_CASE("combiners are bounded and monotone") {
  Rng rng(106);
  for (Combiner h : {Combiner::kMax, Combiner::kProduct, Combiner::kMean}) {
    FusionConfig cfg;
    cfg.combiner = h;
    for (int trial = 0; trial < 50; ++trial) {
      const Dims d = random_dims(rng);
      std::vector<double> s(d.pixels()), a(d.pixels()), a2(d.pixels());
      for (std::size_t m = 0; m < d.pixels(); ++m) {
        s[m] = rng.uniform();
        a[m] = rng.uniform();
        a2[m] = std::min(1.0, a[m] + rng.uniform(0.0, 0.3));
      }
      const CueMap lo = fuse_cues(CueMap(d, s), CueMap(d, a), cfg);
      const CueMap hi = fuse_cues(CueMap(d, s), CueMap(d, a2), cfg);
      for (std::size_t m = 0; m < d.pixels(); ++m) {
        CHECK(lo[m] >= 0.0);
        CHECK(lo[m] <= 1.0);
        CHECK(hi[m] >= lo[m]);
      }
    }
  }
}

TEST_CASE("losses are invariant to the pixel order") {
  Rng rng(107);
  for (int trial = 0; trial < 30; ++trial) {
    const int L = rng.integer(2, 5);
    const Dims d{1, rng.integer(2, 12)};
    const LogitMap f = random_logits(rng, d, L, 2.0);
    std::vector<double> t(d.pixels() * L);
    for (std::size_t m = 0; m < d.pixels(); ++m) {
      double s = 0;
      for (int l = 0; l < L; ++l) s += t[m * L + l] = rng.uniform() + 1e-3;
      for (int l = 0; l < L; ++l) t[m * L + l] /= s;
    }
    std::vector<std::size_t> order(d.pixels());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::reverse(order.begin(), order.end());
    std::vector<double> fp(f.values().size()), tp(t.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
      for (int l = 0; l < L; ++l) {
        fp[i * L + l] = f.values()[order[i] * L + l];
        tp[i * L + l] = t[order[i] * L + l];
      }
    }
    const LossConfig cfg;
    const double a = combined_loss(ProbMap(d, L, t), f, cfg).value;
    const double b = combined_loss(ProbMap(d, L, tp), LogitMap(d, L, fp), cfg).value;
    CHECK(a == doctest::Approx(b).epsilon(1e-12));
  }
}

TEST_CASE("mIoU of a prediction against itself is 1") {
  Rng rng(108);
  const auto space = LabelSpace::with_classes(3);
  for (int trial = 0; trial < 30; ++trial) {
    const Dims d = random_dims(rng);
    std::vector<Label> g(d.pixels());
    for (Label& l : g) l = rng.integer(0, 3);
    const SegMask m(d, g, space);
    CHECK(iou_scores(accumulate(ConfusionMatrix(4), m, m)).miou == 1.0);
  }
}
