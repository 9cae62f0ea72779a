#include <doctest.h>

#include <random>
#include <sstream>

#include "oracles.h"
#include "ovl/error.h"
#include "ovl/metrics.h"

using namespace ovl;

namespace {

Annotation ann(std::initializer_list<std::tuple<double, double, const char*>> turns) {
  Annotation a("f");
  for (const auto& [on, off, spk] : turns) a.add({on, off}, spk);
  return a;
}

ScoreSequence track(const std::vector<double>& overlap) {
  ScoreSequence s;
  s.scores.resize(static_cast<Eigen::Index>(overlap.size()), 2);
  for (std::size_t t = 0; t < overlap.size(); ++t) {
    s.scores(static_cast<Eigen::Index>(t), 0) = 1.0 - overlap[t];
    s.scores(static_cast<Eigen::Index>(t), 1) = overlap[t];
  }
  return s;
}

void check_decomposition(const DerReport& r) {
  CHECK(std::abs(r.der - (r.false_alarm + r.missed_detection + r.confusion)) < 1e-9);
  CHECK(r.false_alarm >= 0.0);
  CHECK(r.missed_detection >= 0.0);
  CHECK(r.confusion >= 0.0);
}

}  // namespace

TEST_CASE("precision and recall examples") {
  const Timeline ref({{0.0, 10.0}});
  const auto same = precision_recall(ref, ref);
  CHECK(same.precision == 100.0);
  CHECK(same.recall == 100.0);

  const auto empty = precision_recall(ref, Timeline{});
  CHECK(empty.precision == 100.0);
  CHECK(empty.zero_detection);
  CHECK(empty.recall == 0.0);

  const auto half = precision_recall(ref, Timeline({{5.0, 15.0}}));
  CHECK(half.precision == doctest::Approx(50.0));
  CHECK(half.recall == doctest::Approx(50.0));

  CHECK(precision_recall(Timeline{}, ref).recall == 100.0);
}

TEST_CASE("swapping reference and hypothesis swaps precision and recall") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  for (int trial = 0; trial < 100; ++trial) {
    Timeline a, b;
    for (int i = 0; i < 5; ++i) {
      double x = u(rng), y = u(rng);
      if (x > y) std::swap(x, y);
      if (y > x) a = a.unite(Timeline({{x, y}}));
      x = u(rng);
      y = u(rng);
      if (x > y) std::swap(x, y);
      if (y > x) b = b.unite(Timeline({{x, y}}));
    }
    const auto ab = precision_recall(a, b), ba = precision_recall(b, a);
    CHECK(ab.precision == doctest::Approx(ba.recall).epsilon(1e-12));
    CHECK(ab.recall == doctest::Approx(ba.precision).epsilon(1e-12));
  }
}

TEST_CASE("detection aggregation sums durations") {
  const DetectionReport a = precision_recall(Timeline({{0.0, 10.0}}), Timeline({{0.0, 5.0}}));
  const DetectionReport b = precision_recall(Timeline({{0.0, 2.0}}), Timeline({{0.0, 4.0}}));
  const std::vector<DetectionReport> both{a, b};
  const DetectionReport r = aggregate(both);
  CHECK(r.precision == doctest::Approx(100.0 * 7.0 / 9.0));
  CHECK(r.recall == doctest::Approx(100.0 * 7.0 / 12.0));
}

TEST_CASE("DER examples") {
  const Annotation ref = ann({{0.0, 4.0, "A"}, {2.0, 6.0, "B"}, {7.0, 9.0, "A"}});
  const auto same = der(ref, ref);
  CHECK(same.der == 0.0);
  check_decomposition(same);

  const Annotation permuted = ann({{0.0, 4.0, "q"}, {2.0, 6.0, "p"}, {7.0, 9.0, "q"}});
  const auto p = der(ref, permuted);
  CHECK(p.der == 0.0);
  CHECK(p.mapping.at("A") == "q");

  const auto empty = der(ref, Annotation("f"));
  CHECK(empty.missed_detection == 100.0);
  CHECK(empty.der == 100.0);

  const Annotation ab = ann({{0.0, 4.0, "A"}, {2.0, 6.0, "B"}});
  const Annotation x = ann({{0.0, 6.0, "X"}});
  const auto r = der(ab, x);
  // X maps to A. [2,4] misses B; [4,6] attributes B's speech to X.
  CHECK(r.false_alarm == 0.0);
  CHECK(r.missed_detection == 25.0);
  CHECK(r.confusion == 25.0);
  CHECK(r.der == 50.0);
  CHECK(r.total_reference_speech == 8.0);
  CHECK(r.mapping.at("A") == "X");
  const auto o = oracle::per_instant_der(ab, x);
  CHECK(o.der() == doctest::Approx(50.0));
  CHECK(o.miss == doctest::Approx(2.0));
  CHECK(o.confusion == doctest::Approx(2.0));

  CHECK_THROWS_AS(der(Annotation("f"), x), DataError);
}

TEST_CASE("DER with confusion and false alarm") {
  const Annotation ref = ann({{0.0, 10.0, "A"}, {10.0, 20.0, "B"}});
  const Annotation hyp = ann({{0.0, 15.0, "x"}, {15.0, 25.0, "y"}});
  const auto r = der(ref, hyp);
  CHECK(r.confusion_time == doctest::Approx(5.0));
  CHECK(r.false_alarm_time == doctest::Approx(5.0));
  CHECK(r.missed_time == 0.0);
  CHECK(r.der == doctest::Approx(50.0));
}

TEST_CASE("collar excludes boundary regions") {
  const Annotation ref = ann({{0.0, 10.0, "A"}});
  const Annotation hyp = ann({{0.2, 9.8, "x"}});
  CHECK(der(ref, hyp).missed_time == doctest::Approx(0.4));
  const auto c = der(ref, hyp, 0.25);
  CHECK(c.der == 0.0);
  CHECK(c.total_reference_speech == doctest::Approx(9.5));
}

TEST_CASE("Hungarian matching equals brute force") {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> dim(1, 6);
  std::uniform_int_distribution<std::int64_t> w(0, 1000);
  for (int trial = 0; trial < 500; ++trial) {
    const int R = dim(rng), H = dim(rng);
    std::vector<std::vector<std::int64_t>> m(static_cast<std::size_t>(R), std::vector<std::int64_t>(static_cast<std::size_t>(H)));
    for (auto& row : m) {
      for (auto& x : row) x = trial % 3 == 0 ? w(rng) % 3 : w(rng);
    }
    auto total = [&m](const std::vector<int>& match) {
      std::int64_t s = 0;
      for (std::size_t i = 0; i < match.size(); ++i) {
        if (match[i] >= 0) s += m[i][static_cast<std::size_t>(match[i])];
      }
      return s;
    };
    const auto h = max_weight_matching(m), b = max_weight_matching_brute_force(m);
    CHECK(total(h) == total(b));
    std::vector<int> used;
    for (int j : h) {
      if (j >= 0) used.push_back(j);
    }
    std::sort(used.begin(), used.end());
    CHECK(std::adjacent_find(used.begin(), used.end()) == used.end());
  }
}

TEST_CASE("DER on random annotations matches the per-instant oracle") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    const Annotation ref = oracle::random_annotation(rng, 4, 20.0, 4, "r");
    const Annotation hyp = oracle::random_annotation(rng, 4, 20.0, 4, "h");
    const auto fast = der(ref, hyp);
    const auto slow = der(ref, hyp, 0.0, MappingMethod::brute_force);
    CHECK(fast.der == slow.der);
    CHECK(fast.confusion == slow.confusion);
    check_decomposition(fast);
    const auto o = oracle::per_instant_der(ref, hyp);
    CHECK(fast.total_reference_speech == doctest::Approx(o.total).epsilon(1e-12));
    CHECK(fast.missed_time == doctest::Approx(o.miss).epsilon(1e-12));
    CHECK(fast.false_alarm_time == doctest::Approx(o.fa).epsilon(1e-12));
    CHECK(fast.confusion_time == doctest::Approx(o.confusion).epsilon(1e-12));
  }
}

TEST_CASE("DER is invariant to splitting segments") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const Annotation ref = oracle::random_annotation(rng, 3, 10.0, 3, "r");
    const Annotation hyp = oracle::random_annotation(rng, 3, 10.0, 3, "h");
    Annotation split("f");
    for (const auto& t : hyp.turns()) {
      const double mid = std::round((t.segment.onset + t.segment.offset) * 500.0) / 1000.0;
      if (mid > t.segment.onset && mid < t.segment.offset) {
        split.add({t.segment.onset, mid}, t.speaker);
        split.add({mid, t.segment.offset}, t.speaker);
      } else {
        split.add(t.segment, t.speaker);
      }
    }
    const auto a = der(ref, hyp), b = der(ref, split);
    CHECK(a.der == b.der);
    CHECK(a.confusion == b.confusion);
  }
}

TEST_CASE("DER aggregation") {
  const Annotation ref = ann({{0.0, 10.0, "A"}});
  const std::vector<DerReport> reports{der(ref, ann({{0.0, 5.0, "x"}})),
                                       der(ref, ann({{0.0, 10.0, "x"}}))};
  const DerReport r = aggregate(reports);
  CHECK(r.der == doctest::Approx(25.0));
  check_decomposition(r);
}

TEST_CASE("threshold tuning") {
  SUBCASE("separable scores") {
    std::vector<double> p(100);
    for (std::size_t t = 0; t < 100; ++t) p[t] = t >= 50 ? 0.8 : 0.2;
    const std::vector<ScoreSequence> s{track(p)};
    const std::vector<Timeline> ref{Timeline({{0.5, 1.0}})};
    const auto r = tune_threshold(s, ref);
    REQUIRE(r.attainable);
    CHECK(r.threshold >= 0.2);
    CHECK(r.threshold < 0.8);
    CHECK(r.precision == 100.0);
    CHECK(r.recall == 100.0);
  }
  SUBCASE("noisy high scores force zero recall") {
    // 10 positives at 0.9; 1000 negatives, 10% of them at 0.95.
    std::vector<double> p;
    for (int i = 0; i < 10; ++i) p.push_back(0.9);
    for (int i = 0; i < 1000; ++i) p.push_back(i % 10 == 0 ? 0.95 : 0.1);
    const std::vector<ScoreSequence> s{track(p)};
    const std::vector<Timeline> ref{Timeline({{0.0, 0.1}})};
    const auto r = tune_threshold(s, ref);
    REQUIRE(r.attainable);
    CHECK(r.threshold >= 0.95);
    CHECK(r.recall == 0.0);

    // Exhaustive oracle: every smaller candidate fails the target.
    for (double theta : {0.1, 0.9}) {
      int tp = 0, fp = 0;
      for (std::size_t t = 0; t < p.size(); ++t) {
        if (p[t] > theta) (t < 10 ? tp : fp)++;
      }
      CHECK(100.0 * tp / (tp + fp) < 90.0);
    }
  }
  SUBCASE("no positives") {
    const std::vector<ScoreSequence> s{track({0.1, 0.7, 0.9})};
    const std::vector<Timeline> ref{Timeline{}};
    CHECK_FALSE(tune_threshold(s, ref).attainable);
  }
}

TEST_CASE("tuned threshold is the smallest qualifying candidate") {
  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> u;
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> p(300);
    std::vector<std::uint8_t> truth(300);
    for (std::size_t t = 0; t < 300; ++t) {
      truth[t] = (t / 30) % 3 == 0;
      p[t] = std::round(std::clamp(0.35 * truth[t] + u(rng) * 0.65, 0.0, 1.0) * 100.0) / 100.0;
    }
    const std::vector<ScoreSequence> s{track(p)};
    const std::vector<Timeline> ref{timeline_from_mask(truth, {0.0, 0.01, 300})};
    const auto r = tune_threshold(s, ref, 80.0);
    auto precision_at = [&](double theta) {
      int tp = 0, fp = 0;
      for (std::size_t t = 0; t < 300; ++t) {
        if (p[t] > theta) (truth[t] ? tp : fp)++;
      }
      return tp + fp == 0 ? 100.0 : 100.0 * tp / (tp + fp);
    };
    REQUIRE(r.attainable);
    CHECK(precision_at(r.threshold) == doctest::Approx(r.precision));
    for (double theta : p) {
      if (theta < r.threshold) CHECK(precision_at(theta) < 80.0);
    }
  }
}

TEST_CASE("reports") {
  const Annotation ref = ann({{0.0, 4.0, "A"}, {2.0, 6.0, "B"}});
  const auto r = der(ref, ann({{0.0, 6.0, "X"}}));
  const std::string j = to_json(r, "f1");
  CHECK(j.find("\"der\":50.0") != std::string::npos);
  CHECK(j.find("\"uri\":\"f1\"") != std::string::npos);
  std::ostringstream out;
  const std::vector<std::pair<std::string, DerReport>> rows{{"f1", r}};
  write_der_table(out, rows);
  CHECK(out.str().find("DER%") != std::string::npos);
  CHECK(out.str().find("50.0") != std::string::npos);
}
