#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ovl {

/// Half-open time interval [onset, offset) in seconds.
struct Segment {
  double onset = 0.0;
  double offset = 0.0;

  double duration() const { return offset - onset; }
  bool contains(double t) const { return onset <= t && t < offset; }

  friend bool operator==(const Segment&, const Segment&) = default;
  friend auto operator<=>(const Segment&, const Segment&) = default;
};

/// A set of unlabeled regions. Always kept normalized: sorted, with
/// overlapping or touching segments merged.
class Timeline {
 public:
  Timeline() = default;
  explicit Timeline(std::vector<Segment> segments);

  void add(Segment segment);

  const std::vector<Segment>& segments() const { return segments_; }
  bool empty() const { return segments_.empty(); }
  std::size_t size() const { return segments_.size(); }
  double duration() const;

  Timeline intersect(const Timeline& other) const;
  Timeline unite(const Timeline& other) const;
  // Restricts to [onset, offset).
  Timeline crop(Segment window) const;
  // Fills gaps strictly shorter than `max_gap`.
  Timeline fill_gaps(double max_gap) const;
  // Drops segments strictly shorter than `min_duration`.
  Timeline drop_shorter(double min_duration) const;

  friend bool operator==(const Timeline&, const Timeline&) = default;

 private:
  void normalize();
  std::vector<Segment> segments_;
};

struct Turn {
  Segment segment;
  std::string speaker;

  friend bool operator==(const Turn&, const Turn&) = default;
};

/// Speaker-labeled segments. Entries of distinct speakers may overlap in
/// time; that is how overlapped speech is represented.
class Annotation {
 public:
  Annotation() = default;
  explicit Annotation(std::string uri) : uri_(std::move(uri)) {}

  void add(Segment segment, std::string speaker);

  const std::string& uri() const { return uri_; }
  void set_uri(std::string uri) { uri_ = std::move(uri); }

  // Sorted by onset, then offset, then speaker.
  const std::vector<Turn>& turns() const { return turns_; }
  bool empty() const { return turns_.empty(); }

  std::vector<std::string> speakers() const;
  Timeline speaker_timeline(const std::string& speaker) const;
  // Union of all speech.
  Timeline support() const;
  // Per-speaker merge of overlapping or touching turns.
  Annotation normalized() const;
  // Regions where at least `min_speakers` distinct speakers are active.
  Timeline regions_with_at_least(int min_speakers) const;
  Annotation rename(const std::string& prefix) const;

  friend bool operator==(const Annotation&, const Annotation&) = default;

 private:
  std::string uri_;
  std::vector<Turn> turns_;
};

/// Overlapped speech: two or more simultaneous speakers.
inline Timeline overlap_regions(const Annotation& annotation) {
  return annotation.regions_with_at_least(2);
}

/// Regular frame grid. Cell i spans [start + i*step, start + (i+1)*step) and
/// is represented by its midpoint for rasterization.
struct FrameGrid {
  double start_time = 0.0;
  double step = 0.01;
  std::size_t size = 0;

  double cell_onset(std::size_t i) const { return start_time + static_cast<double>(i) * step; }
  double cell_offset(std::size_t i) const { return cell_onset(i + 1); }
  double midpoint(std::size_t i) const {
    return start_time + (static_cast<double>(i) + 0.5) * step;
  }
  double end_time() const { return cell_onset(size); }
};

/// mask[i] = 1 iff cell i's midpoint lies inside the timeline.
std::vector<std::uint8_t> rasterize(const Timeline& timeline, const FrameGrid& grid);

/// Maximal runs of set cells become segments.
Timeline timeline_from_mask(std::span<const std::uint8_t> mask, const FrameGrid& grid);

}  // namespace ovl
