#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "ovl/detector.h"
#include "ovl/timeline.h"

namespace ovl {

struct SlidingConfig {
  double window = 2.0;
  double hop = 0.5;
  double threshold = 0.5;  // theta_OSD; frames strictly above it are overlap
  double min_duration_on = 0.0;
  double min_duration_off = 0.0;

  void validate() const;
};

struct WindowPlan {
  std::size_t length = 0;           // frames per window
  std::vector<std::size_t> starts;  // first frame of each window
};

/// Windows of round(window/step) frames every round(hop/step) frames. When the
/// regular grid misses the tail, one extra window is aligned to the end. A
/// sequence shorter than one window gets a single window spanning all of it.
WindowPlan plan_windows(std::size_t num_frames, double frame_step, const SlidingConfig& config);

/// Scores windows [start, start + length) for the given starts; one
/// length x 2 matrix per start.
using WindowScorer =
    std::function<std::vector<RowMatrix>(std::span<const std::size_t> starts, std::size_t length)>;

/// Per-frame arithmetic mean over every window covering the frame.
ScoreSequence aggregate_windows(const FrameGrid& grid, const WindowPlan& plan,
                                const WindowScorer& scorer, std::size_t windows_per_call = 32);

ScoreSequence slide_scores(const LabelerModel& model, const FeatureMatrix& features,
                           const SlidingConfig& config);

/// Maximal runs with overlap score > threshold, then gaps shorter than
/// min_duration_off filled, then runs shorter than min_duration_on dropped.
Timeline binarize(const ScoreSequence& scores, const SlidingConfig& config);

/// Two columns, onset and offset in seconds, with a header row.
void write_timeline_csv(const Timeline& timeline, std::ostream& out);

}  // namespace ovl
