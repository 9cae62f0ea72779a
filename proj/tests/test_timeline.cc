#include <doctest.h>

#include <random>

#include "ovl/error.h"
#include "ovl/timeline.h"

using namespace ovl;

TEST_CASE("timeline normalizes overlapping and touching segments") {
  Timeline t({{3.0, 4.0}, {0.0, 1.0}, {0.5, 2.0}, {2.0, 2.5}});
  REQUIRE(t.size() == 2);
  CHECK(t.segments()[0] == Segment{0.0, 2.5});
  CHECK(t.segments()[1] == Segment{3.0, 4.0});
  CHECK(t.duration() == doctest::Approx(3.5));
}

TEST_CASE("timeline rejects empty segments") {
  CHECK_THROWS_AS(Timeline({{1.0, 1.0}}), DataError);
}

TEST_CASE("intersection, union, gap filling") {
  Timeline a({{0.0, 10.0}});
  Timeline b({{5.0, 15.0}});
  CHECK(a.intersect(b).duration() == doctest::Approx(5.0));
  CHECK(a.unite(b).duration() == doctest::Approx(15.0));
  Timeline gappy({{0.0, 1.0}, {1.05, 2.0}, {3.0, 4.0}});
  CHECK(gappy.fill_gaps(0.1).size() == 2);
  CHECK(gappy.drop_shorter(1.0).size() == 2);
  CHECK(gappy.drop_shorter(0.9).size() == 3);
  CHECK(gappy.drop_shorter(1.01).empty());
}

TEST_CASE("annotation overlap regions") {
  Annotation a;
  a.add({0.0, 4.0}, "A");
  a.add({2.0, 6.0}, "B");
  a.add({5.0, 7.0}, "C");
  const Timeline ov = overlap_regions(a);
  REQUIRE(ov.size() == 2);
  CHECK(ov.segments()[0] == Segment{2.0, 4.0});
  CHECK(ov.segments()[1] == Segment{5.0, 6.0});
  CHECK(a.regions_with_at_least(3).empty());
  CHECK(a.support().duration() == doctest::Approx(7.0));
}

TEST_CASE("a speaker overlapping itself is not overlapped speech") {
  Annotation a;
  a.add({0.0, 4.0}, "A");
  a.add({1.0, 5.0}, "A");
  CHECK(overlap_regions(a).empty());
  CHECK(a.normalized().turns().size() == 1);
}

TEST_CASE("duplicate turns are stored once") {
  Annotation a;
  a.add({0.0, 1.0}, "A");
  a.add({0.0, 1.0}, "A");
  CHECK(a.turns().size() == 1);
}

TEST_CASE("rasterize uses cell midpoints") {
  const FrameGrid grid{0.0, 0.01, 10};
  const auto mask = rasterize(Timeline({{0.02, 0.05}}), grid);
  // Midpoints 0.025, 0.035, 0.045 lie inside.
  const std::vector<std::uint8_t> expected{0, 0, 1, 1, 1, 0, 0, 0, 0, 0};
  CHECK(mask == expected);
  CHECK(rasterize(Timeline({{0.021, 0.024}}), grid) == std::vector<std::uint8_t>(10, 0));
}

TEST_CASE("mask -> timeline -> mask round trip on random masks") {
  std::mt19937_64 rng(3);
  std::bernoulli_distribution coin(0.3);
  for (int trial = 0; trial < 200; ++trial) {
    const FrameGrid grid{0.37 * trial, 0.01, 1 + static_cast<std::size_t>(rng() % 300)};
    std::vector<std::uint8_t> mask(grid.size);
    for (auto& m : mask) m = coin(rng);
    CHECK(rasterize(timeline_from_mask(mask, grid), grid) == mask);
  }
}
