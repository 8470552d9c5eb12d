#include <cmath>
#include <limits>

#include "doctest.h"
#include "wseg/core_types.hpp"

using namespace wseg;

TEST_CASE("label space ids and names") {
  const LabelSpace space({"cat", "dog"});
  CHECK(space.num_classes() == 2);
  CHECK(space.num_labels() == 3);
  CHECK(space.name(0) == "background");
  CHECK(space.name(2) == "dog");
  CHECK(space.ignore_label() == 255);
  CHECK(space.is_foreground(1));
  CHECK_FALSE(space.is_foreground(0));
  CHECK_FALSE(space.is_label(3));
  CHECK_THROWS_AS(space.name(3), DomainError);
}

TEST_CASE("label space rejects bad construction") {
  CHECK_THROWS_AS(LabelSpace(std::vector<std::string>{}), DomainError);
  CHECK_THROWS_AS(LabelSpace::with_classes(0), DomainError);
  // ignore label must not collide with a real id
  CHECK_THROWS_AS(LabelSpace({"a", "b"}, 2), DomainError);
  CHECK_THROWS_AS(LabelSpace({"a", "b"}, 0), DomainError);
  CHECK_NOTHROW(LabelSpace({"a", "b"}, 3));
  CHECK_NOTHROW(LabelSpace({"a", "b"}, -1));
}

TEST_CASE("label set is sorted, unique, foreground only") {
  const auto space = LabelSpace::with_classes(4);
  const LabelSet z({3, 1, 3}, space);
  CHECK(z.ids() == std::vector<Label>{1, 3});
  CHECK(z.contains(3));
  CHECK_FALSE(z.contains(2));
  CHECK_THROWS_AS(LabelSet({}, space), DomainError);
  CHECK_THROWS_AS(LabelSet({0}, space), DomainError);
  CHECK_THROWS_AS(LabelSet({5}, space), DomainError);
}

TEST_CASE("map invariants are enforced") {
  const Dims d{1, 2};
  CHECK_THROWS_AS(CueMap(d, {0.5, 1.5}), DomainError);
  CHECK_THROWS_AS(CueMap(d, {0.5}), DomainError);
  CHECK_THROWS_AS(LogitMap(d, 2, {0, 0, 0, std::numeric_limits<double>::infinity()}),
                  DomainError);
  CHECK_THROWS_AS(LogitMap(d, 2, {0, 0, 0, std::nan("")}), DomainError);
  const auto space = LabelSpace::with_classes(2);
  CHECK_THROWS_AS(SegMask(d, {0, 3}, space), DomainError);
  CHECK_NOTHROW(SegMask(d, {0, 255}, space));
  CHECK(SegMask(d, {2, 255}, space).is_ignored(1));
  CHECK_THROWS_AS(Image(d, {0, 0, 0, 0, 0, 1.2}), DomainError);
}

TEST_CASE("one_hot") {
  const auto space = LabelSpace::with_classes(2);  // |L| = 3
  CHECK(one_hot(0, space) == std::vector<double>{1, 0, 0});
  CHECK(one_hot(2, space) == std::vector<double>{0, 0, 1});
  CHECK_THROWS_AS(one_hot(3, space), DomainError);
  CHECK_THROWS_AS(one_hot(-1, space), DomainError);
}

TEST_CASE("one_hot then argmax recovers the label") {
  const auto space = LabelSpace::with_classes(6);
  for (Label l = 0; l < space.num_labels(); ++l) {
    CHECK(argmax(one_hot(l, space)) == static_cast<std::size_t>(l));
  }
}

TEST_CASE("argmax breaks ties toward the lowest index") {
  const std::vector<double> v{0.4, 0.4, 0.2};
  CHECK(argmax(v) == 0);
  const std::vector<double> w{0.1, 0.3, 0.3};
  CHECK(argmax(w) == 1);
}

TEST_CASE("validate") {
  SUBCASE("uniform over 21 labels is a distribution") {
    const Dims d{3, 3};
    ProbMap p(d, 21, std::vector<double>(d.pixels() * 21, 1.0 / 21.0));
    CHECK(validate(p).ok);
  }
  SUBCASE("sum 1.1 is flagged at its pixel") {
    ProbMap p({1, 3}, 2, {0.5, 0.5, 0.5, 0.6, 1.0, 0.0});
    const auto r = validate(p);
    CHECK_FALSE(r.ok);
    REQUIRE(r.pixel.has_value());
    CHECK(*r.pixel == 1);
  }
  SUBCASE("negative mass is flagged even when the sum is 1") {
    ProbMap p({1, 1}, 2, {-0.1, 1.1});
    const auto r = validate(p);
    CHECK_FALSE(r.ok);
    CHECK(*r.pixel == 0);
  }
  SUBCASE("invalid pixels are not inspected") {
    ProbMap p({1, 2}, 2, {0.5, 0.5, 7.0, 7.0}, {1, 0});
    CHECK(validate(p).ok);
    CHECK(p.valid_count() == 1);
  }
}

TEST_CASE("softmax_row is shift-stable and sums to one") {
  const std::vector<double> f{1000.0, 1001.0, 999.0};
  std::vector<double> p(3);
  softmax_row(f, p);
  // Oracle from the shifted values 1, 2, 0.
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(0.0);
  CHECK(p[0] == doctest::Approx(std::exp(1.0) / z).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(std::exp(2.0) / z).epsilon(1e-14));
  CHECK(p[2] == doctest::Approx(1.0 / z).epsilon(1e-14));
}
