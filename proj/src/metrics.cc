#include "ovl/metrics.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "ovl/error.h"

namespace ovl {
namespace {

using Ticks = std::int64_t;
constexpr double kTicksPerSecond = 1e6;

Ticks to_ticks(double seconds) { return std::llround(seconds * kTicksPerSecond); }
double to_seconds(Ticks ticks) { return static_cast<double>(ticks) / kTicksPerSecond; }

double percent(double part, double whole) { return whole > 0.0 ? 100.0 * part / whole : 0.0; }

}  // namespace

DetectionReport precision_recall(const Timeline& reference, const Timeline& hypothesis) {
  DetectionReport r;
  r.reference_duration = reference.duration();
  r.detected_duration = hypothesis.duration();
  r.correct_duration = reference.intersect(hypothesis).duration();
  r.zero_detection = r.detected_duration <= 0.0;
  r.precision = r.zero_detection ? 100.0 : percent(r.correct_duration, r.detected_duration);
  r.recall = r.reference_duration <= 0.0 ? 100.0 : percent(r.correct_duration, r.reference_duration);
  return r;
}

DetectionReport aggregate(std::span<const DetectionReport> reports) {
  DetectionReport r;
  for (const auto& x : reports) {
    r.reference_duration += x.reference_duration;
    r.detected_duration += x.detected_duration;
    r.correct_duration += x.correct_duration;
  }
  r.zero_detection = r.detected_duration <= 0.0;
  r.precision = r.zero_detection ? 100.0 : percent(r.correct_duration, r.detected_duration);
  r.recall = r.reference_duration <= 0.0 ? 100.0 : percent(r.correct_duration, r.reference_duration);
  return r;
}

std::vector<int> max_weight_matching(const std::vector<std::vector<std::int64_t>>& weight) {
  const std::size_t rows = weight.size();
  const std::size_t cols = rows ? weight[0].size() : 0;
  const std::size_t k = std::max(rows, cols);
  std::vector<int> match(rows, -1);
  if (rows == 0 || cols == 0) return match;
  std::int64_t top = 0;
  for (const auto& row : weight) {
    if (row.size() != cols) throw DataError("ragged weight matrix");
    for (auto w : row) top = std::max(top, w);
  }
  // Square minimization problem; padded cells have zero weight.
  auto cost = [&](std::size_t i, std::size_t j) -> std::int64_t {
    return top - (i < rows && j < cols ? weight[i][j] : 0);
  };
  constexpr std::int64_t kInf = std::numeric_limits<std::int64_t>::max() / 4;
  std::vector<std::int64_t> u(k + 1, 0), v(k + 1, 0);
  std::vector<std::size_t> p(k + 1, 0), way(k + 1, 0);
  for (std::size_t i = 1; i <= k; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<std::int64_t> minv(k + 1, kInf);
    std::vector<bool> used(k + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      std::int64_t delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= k; ++j) {
        if (used[j]) continue;
        const std::int64_t cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= k; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  for (std::size_t j = 1; j <= k; ++j) {
    const std::size_t i = p[j] - 1;
    if (i < rows && j - 1 < cols) match[i] = static_cast<int>(j - 1);
  }
  return match;
}

std::vector<int> max_weight_matching_brute_force(
    const std::vector<std::vector<std::int64_t>>& weight) {
  const std::size_t rows = weight.size();
  const std::size_t cols = rows ? weight[0].size() : 0;
  const std::size_t k = std::max(rows, cols);
  std::vector<int> best(rows, -1);
  if (rows == 0 || cols == 0) return best;
  std::vector<std::size_t> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  std::int64_t best_total = -1;
  do {
    std::int64_t total = 0;
    for (std::size_t i = 0; i < rows; ++i) {
      if (perm[i] < cols) total += weight[i][perm[i]];
    }
    if (total > best_total) {
      best_total = total;
      for (std::size_t i = 0; i < rows; ++i) {
        best[i] = perm[i] < cols ? static_cast<int>(perm[i]) : -1;
      }
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

DerReport der(const Annotation& reference, const Annotation& hypothesis, double collar,
              MappingMethod method) {
  const Annotation ref = reference.normalized();
  const Annotation hyp = hypothesis.normalized();
  const auto ref_ids = ref.speakers();
  const auto hyp_ids = hyp.speakers();
  const std::size_t R = ref_ids.size();
  const std::size_t H = hyp_ids.size();

  enum Kind { kRef, kHyp, kNoScore };
  struct Event {
    Ticks time;
    Kind kind;
    std::size_t index;
    int delta;
  };
  std::vector<Event> events;
  auto index_of = [](const std::vector<std::string>& ids, const std::string& s) {
    return static_cast<std::size_t>(std::lower_bound(ids.begin(), ids.end(), s) - ids.begin());
  };
  const Ticks collar_ticks = to_ticks(std::max(0.0, collar));
  for (const auto& t : ref.turns()) {
    const Ticks on = to_ticks(t.segment.onset), off = to_ticks(t.segment.offset);
    if (off > on) {
      const std::size_t idx = index_of(ref_ids, t.speaker);
      events.push_back({on, kRef, idx, +1});
      events.push_back({off, kRef, idx, -1});
    }
    if (collar_ticks > 0) {
      for (Ticks b : {on, off}) {
        events.push_back({b - collar_ticks, kNoScore, 0, +1});
        events.push_back({b + collar_ticks, kNoScore, 0, -1});
      }
    }
  }
  for (const auto& t : hyp.turns()) {
    const Ticks on = to_ticks(t.segment.onset), off = to_ticks(t.segment.offset);
    if (off <= on) continue;
    const std::size_t idx = index_of(hyp_ids, t.speaker);
    events.push_back({on, kHyp, idx, +1});
    events.push_back({off, kHyp, idx, -1});
  }
  std::sort(events.begin(), events.end(),
            [](const Event& a, const Event& b) { return a.time < b.time; });

  std::vector<int> ref_active(R, 0), hyp_active(H, 0);
  int no_score = 0;
  std::vector<std::vector<Ticks>> joint(R, std::vector<Ticks>(H, 0));
  Ticks total = 0, miss = 0, fa = 0, matched_pairs = 0;
  std::vector<std::size_t> ar, ah;
  for (std::size_t e = 0; e < events.size();) {
    const Ticks now = events[e].time;
    for (; e < events.size() && events[e].time == now; ++e) {
      const Event& ev = events[e];
      if (ev.kind == kRef) ref_active[ev.index] += ev.delta;
      if (ev.kind == kHyp) hyp_active[ev.index] += ev.delta;
      if (ev.kind == kNoScore) no_score += ev.delta;
    }
    if (e == events.size()) break;
    const Ticks d = events[e].time - now;
    if (d <= 0 || no_score > 0) continue;
    ar.clear();
    ah.clear();
    for (std::size_t i = 0; i < R; ++i) {
      if (ref_active[i] > 0) ar.push_back(i);
    }
    for (std::size_t j = 0; j < H; ++j) {
      if (hyp_active[j] > 0) ah.push_back(j);
    }
    const auto nr = static_cast<Ticks>(ar.size());
    const auto nh = static_cast<Ticks>(ah.size());
    total += d * nr;
    miss += d * std::max<Ticks>(0, nr - nh);
    fa += d * std::max<Ticks>(0, nh - nr);
    matched_pairs += d * std::min(nr, nh);
    for (auto i : ar) {
      for (auto j : ah) joint[i][j] += d;
    }
  }
  if (total == 0) throw DataError("undefined DER: reference contains no scored speech");

  const std::vector<int> mapping = method == MappingMethod::hungarian
                                       ? max_weight_matching(joint)
                                       : max_weight_matching_brute_force(joint);
  Ticks correct = 0;
  DerReport r;
  for (std::size_t i = 0; i < R; ++i) {
    if (mapping[i] < 0) continue;
    correct += joint[i][static_cast<std::size_t>(mapping[i])];
    r.mapping[ref_ids[i]] = hyp_ids[static_cast<std::size_t>(mapping[i])];
  }
  const Ticks confusion = matched_pairs - correct;
  const double denom = static_cast<double>(total);
  r.total_reference_speech = to_seconds(total);
  r.false_alarm_time = to_seconds(fa);
  r.missed_time = to_seconds(miss);
  r.confusion_time = to_seconds(confusion);
  r.correct_time = to_seconds(correct);
  r.false_alarm = 100.0 * static_cast<double>(fa) / denom;
  r.missed_detection = 100.0 * static_cast<double>(miss) / denom;
  r.confusion = 100.0 * static_cast<double>(confusion) / denom;
  r.der = 100.0 * static_cast<double>(fa + miss + confusion) / denom;
  return r;
}

DerReport aggregate(std::span<const DerReport> reports) {
  DerReport r;
  for (const auto& x : reports) {
    r.total_reference_speech += x.total_reference_speech;
    r.false_alarm_time += x.false_alarm_time;
    r.missed_time += x.missed_time;
    r.confusion_time += x.confusion_time;
    r.correct_time += x.correct_time;
  }
  const double total = r.total_reference_speech;
  if (total <= 0.0) throw DataError("undefined DER: reference contains no scored speech");
  r.false_alarm = percent(r.false_alarm_time, total);
  r.missed_detection = percent(r.missed_time, total);
  r.confusion = percent(r.confusion_time, total);
  r.der = percent(r.false_alarm_time + r.missed_time + r.confusion_time, total);
  return r;
}

ThresholdTuning tune_threshold(std::span<const ScoreSequence> scores,
                               std::span<const Timeline> references, double target_precision) {
  if (scores.size() != references.size()) {
    throw DataError("need one reference timeline per score sequence");
  }
  std::vector<std::pair<double, std::uint8_t>> frames;
  std::size_t positives = 0;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    const auto truth = rasterize(references[k], scores[k].grid());
    for (std::size_t t = 0; t < truth.size(); ++t) {
      frames.emplace_back(scores[k].overlap(t), truth[t]);
      positives += truth[t];
    }
  }
  ThresholdTuning out;
  if (frames.empty() || positives == 0) return out;
  std::sort(frames.begin(), frames.end());

  // Everything above theta; walk theta upward through the unique scores.
  std::size_t above = frames.size();
  std::size_t true_above = positives;
  for (std::size_t i = 0; i < frames.size();) {
    const double theta = frames[i].first;
    for (; i < frames.size() && frames[i].first == theta; ++i) {
      --above;
      true_above -= frames[i].second;
    }
    const double precision =
        above == 0 ? 100.0 : 100.0 * static_cast<double>(true_above) / static_cast<double>(above);
    if (precision >= target_precision) {
      out.attainable = true;
      out.threshold = theta;
      out.precision = precision;
      out.recall = 100.0 * static_cast<double>(true_above) / static_cast<double>(positives);
      return out;
    }
  }
  return out;
}

std::string to_json(const DerReport& r, const std::string& uri) {
  nlohmann::json j = {{"uri", uri},
                      {"der", r.der},
                      {"false_alarm", r.false_alarm},
                      {"missed_detection", r.missed_detection},
                      {"confusion", r.confusion},
                      {"total_reference_speech", r.total_reference_speech},
                      {"false_alarm_time", r.false_alarm_time},
                      {"missed_time", r.missed_time},
                      {"confusion_time", r.confusion_time},
                      {"mapping", r.mapping}};
  return j.dump();
}

std::string to_json(const DetectionReport& r, const std::string& uri) {
  nlohmann::json j = {{"uri", uri},
                      {"precision", r.precision},
                      {"recall", r.recall},
                      {"detected_duration", r.detected_duration},
                      {"reference_duration", r.reference_duration},
                      {"zero_detection", r.zero_detection}};
  return j.dump();
}

void write_der_table(std::ostream& out,
                     std::span<const std::pair<std::string, DerReport>> rows) {
  std::size_t width = 4;
  for (const auto& [name, r] : rows) width = std::max(width, name.size());
  out << std::left << std::setw(static_cast<int>(width)) << "" << std::right;
  for (const char* h : {"DER%", "FA%", "Miss%", "Conf%"}) out << std::setw(9) << h;
  out << '\n' << std::fixed << std::setprecision(1);
  for (const auto& [name, r] : rows) {
    out << std::left << std::setw(static_cast<int>(width)) << name << std::right
        << std::setw(9) << r.der << std::setw(9) << r.false_alarm << std::setw(9)
        << r.missed_detection << std::setw(9) << r.confusion << '\n';
  }
}

}  // namespace ovl
