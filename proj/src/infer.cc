#include "ovl/infer.h"

#include <cmath>
#include <iomanip>
#include <ostream>

#include "ovl/error.h"

namespace ovl {

void SlidingConfig::validate() const {
  if (!(window > 0.0)) throw UsageError("window must be positive");
  if (!(hop > 0.0) || hop > window) throw UsageError("hop must satisfy 0 < hop <= window");
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw UsageError("threshold must lie in [0, 1]");
  if (min_duration_on < 0.0 || min_duration_off < 0.0) {
    throw UsageError("minimum durations must be non-negative");
  }
}

WindowPlan plan_windows(std::size_t num_frames, double frame_step, const SlidingConfig& config) {
  config.validate();
  if (num_frames == 0) throw DataError("cannot slide over an empty sequence");
  const auto window = static_cast<std::size_t>(std::max<long long>(1, std::llround(config.window / frame_step)));
  const auto hop = static_cast<std::size_t>(std::max<long long>(1, std::llround(config.hop / frame_step)));
  WindowPlan plan;
  if (num_frames <= window) {
    plan.length = num_frames;
    plan.starts = {0};
    return plan;
  }
  plan.length = window;
  for (std::size_t s = 0; s + window <= num_frames; s += hop) plan.starts.push_back(s);
  if (plan.starts.back() + window < num_frames) plan.starts.push_back(num_frames - window);
  return plan;
}

ScoreSequence aggregate_windows(const FrameGrid& grid, const WindowPlan& plan,
                                const WindowScorer& scorer, std::size_t windows_per_call) {
  const auto T = static_cast<Eigen::Index>(grid.size);
  RowMatrix sum = RowMatrix::Zero(T, 2);
  std::vector<double> count(grid.size, 0.0);
  const std::size_t step = std::max<std::size_t>(1, windows_per_call);
  for (std::size_t first = 0; first < plan.starts.size(); first += step) {
    const std::size_t n = std::min(step, plan.starts.size() - first);
    std::span<const std::size_t> starts(plan.starts.data() + first, n);
    const std::vector<RowMatrix> scores = scorer(starts, plan.length);
    if (scores.size() != n) throw DataError("window scorer returned the wrong number of windows");
    for (std::size_t w = 0; w < n; ++w) {
      const auto s = static_cast<Eigen::Index>(starts[w]);
      const auto len = static_cast<Eigen::Index>(plan.length);
      sum.middleRows(s, len) += scores[w];
      for (std::size_t t = starts[w]; t < starts[w] + plan.length; ++t) count[t] += 1.0;
    }
  }
  ScoreSequence out;
  out.frame_step = grid.step;
  out.start_time = grid.start_time;
  out.scores = std::move(sum);
  for (Eigen::Index t = 0; t < T; ++t) out.scores.row(t) /= count[static_cast<std::size_t>(t)];
  return out;
}

ScoreSequence slide_scores(const LabelerModel& model, const FeatureMatrix& features,
                           const SlidingConfig& config) {
  const WindowPlan plan = plan_windows(features.num_frames(), features.frame_step, config);
  WindowScorer scorer = [&](std::span<const std::size_t> starts, std::size_t length) {
    std::vector<RowMatrix> windows;
    windows.reserve(starts.size());
    for (std::size_t s : starts) {
      windows.emplace_back(features.frames.middleRows(static_cast<Eigen::Index>(s),
                                                      static_cast<Eigen::Index>(length)));
    }
    return forward_batch(model, windows);
  };
  ScoreSequence out = aggregate_windows(features.grid(), plan, scorer);
  if (!out.scores.allFinite()) throw NumericalError("detector produced non-finite scores");
  return out;
}

Timeline binarize(const ScoreSequence& scores, const SlidingConfig& config) {
  std::vector<std::uint8_t> mask(scores.num_frames());
  for (std::size_t t = 0; t < mask.size(); ++t) mask[t] = scores.overlap(t) > config.threshold;
  Timeline active = timeline_from_mask(mask, scores.grid());
  if (config.min_duration_off > 0.0) active = active.fill_gaps(config.min_duration_off);
  if (config.min_duration_on > 0.0) active = active.drop_shorter(config.min_duration_on);
  return active;
}

void write_timeline_csv(const Timeline& timeline, std::ostream& out) {
  out << "onset,offset\n" << std::fixed << std::setprecision(3);
  for (const auto& s : timeline.segments()) out << s.onset << ',' << s.offset << '\n';
}

}  // namespace ovl
