#include "ovl/timeline.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "ovl/error.h"

namespace ovl {

Timeline::Timeline(std::vector<Segment> segments) : segments_(std::move(segments)) {
  normalize();
}

void Timeline::add(Segment segment) {
  segments_.push_back(segment);
  normalize();
}

void Timeline::normalize() {
  for (const auto& s : segments_) {
    if (!(s.onset < s.offset)) {
      throw DataError("timeline segment must satisfy onset < offset");
    }
  }
  std::sort(segments_.begin(), segments_.end());
  std::vector<Segment> merged;
  merged.reserve(segments_.size());
  for (const auto& s : segments_) {
    if (!merged.empty() && s.onset <= merged.back().offset) {
      merged.back().offset = std::max(merged.back().offset, s.offset);
    } else {
      merged.push_back(s);
    }
  }
  segments_ = std::move(merged);
}

double Timeline::duration() const {
  double total = 0.0;
  for (const auto& s : segments_) total += s.duration();
  return total;
}

Timeline Timeline::intersect(const Timeline& other) const {
  std::vector<Segment> out;
  std::size_t i = 0, j = 0;
  const auto& a = segments_;
  const auto& b = other.segments_;
  while (i < a.size() && j < b.size()) {
    const double lo = std::max(a[i].onset, b[j].onset);
    const double hi = std::min(a[i].offset, b[j].offset);
    if (lo < hi) out.push_back({lo, hi});
    if (a[i].offset < b[j].offset) {
      ++i;
    } else {
      ++j;
    }
  }
  return Timeline(std::move(out));
}

Timeline Timeline::unite(const Timeline& other) const {
  std::vector<Segment> all = segments_;
  all.insert(all.end(), other.segments_.begin(), other.segments_.end());
  return Timeline(std::move(all));
}

Timeline Timeline::crop(Segment window) const {
  return intersect(Timeline({window}));
}

Timeline Timeline::fill_gaps(double max_gap) const {
  std::vector<Segment> out;
  for (const auto& s : segments_) {
    if (!out.empty() && s.onset - out.back().offset < max_gap) {
      out.back().offset = s.offset;
    } else {
      out.push_back(s);
    }
  }
  return Timeline(std::move(out));
}

Timeline Timeline::drop_shorter(double min_duration) const {
  std::vector<Segment> out;
  for (const auto& s : segments_) {
    if (s.duration() >= min_duration) out.push_back(s);
  }
  return Timeline(std::move(out));
}

void Annotation::add(Segment segment, std::string speaker) {
  if (!(segment.onset < segment.offset)) {
    throw DataError("annotation turn must satisfy onset < offset");
  }
  Turn turn{segment, std::move(speaker)};
  auto less = [](const Turn& a, const Turn& b) {
    if (a.segment != b.segment) return a.segment < b.segment;
    return a.speaker < b.speaker;
  };
  auto pos = std::upper_bound(turns_.begin(), turns_.end(), turn, less);
  if (pos != turns_.begin() && *(pos - 1) == turn) return;  // duplicate pair
  turns_.insert(pos, std::move(turn));
}

std::vector<std::string> Annotation::speakers() const {
  std::set<std::string> unique;
  for (const auto& t : turns_) unique.insert(t.speaker);
  return {unique.begin(), unique.end()};
}

Timeline Annotation::speaker_timeline(const std::string& speaker) const {
  std::vector<Segment> segments;
  for (const auto& t : turns_) {
    if (t.speaker == speaker) segments.push_back(t.segment);
  }
  return Timeline(std::move(segments));
}

Timeline Annotation::support() const {
  std::vector<Segment> segments;
  segments.reserve(turns_.size());
  for (const auto& t : turns_) segments.push_back(t.segment);
  return Timeline(std::move(segments));
}

Annotation Annotation::normalized() const {
  Annotation out(uri_);
  for (const auto& speaker : speakers()) {
    const Timeline tl = speaker_timeline(speaker);
    for (const auto& s : tl.segments()) out.add(s, speaker);
  }
  return out;
}

Timeline Annotation::regions_with_at_least(int min_speakers) const {
  // +1/-1 events per normalized speaker segment; counts hold on [t, next t).
  std::map<double, int> delta;
  const Annotation norm = normalized();
  for (const auto& t : norm.turns()) {
    delta[t.segment.onset] += 1;
    delta[t.segment.offset] -= 1;
  }
  std::vector<Segment> out;
  int active = 0;
  for (auto it = delta.begin(); it != delta.end(); ++it) {
    active += it->second;
    auto next = std::next(it);
    if (next != delta.end() && active >= min_speakers) {
      out.push_back({it->first, next->first});
    }
  }
  return Timeline(std::move(out));
}

Annotation Annotation::rename(const std::string& prefix) const {
  Annotation out(uri_);
  for (const auto& t : turns_) out.add(t.segment, prefix + t.speaker);
  return out;
}

std::vector<std::uint8_t> rasterize(const Timeline& timeline, const FrameGrid& grid) {
  std::vector<std::uint8_t> mask(grid.size, 0);
  if (grid.size == 0) return mask;
  for (const auto& s : timeline.segments()) {
    const double guess = std::ceil((s.onset - grid.start_time) / grid.step - 0.5);
    std::size_t i = guess <= 0.0 ? 0
                  : guess >= static_cast<double>(grid.size) ? grid.size
                                                            : static_cast<std::size_t>(guess);
    while (i > 0 && grid.midpoint(i - 1) >= s.onset) --i;
    while (i < grid.size && grid.midpoint(i) < s.onset) ++i;
    for (; i < grid.size && grid.midpoint(i) < s.offset; ++i) mask[i] = 1;
  }
  return mask;
}

Timeline timeline_from_mask(std::span<const std::uint8_t> mask, const FrameGrid& grid) {
  std::vector<Segment> out;
  std::size_t i = 0;
  while (i < mask.size()) {
    if (!mask[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < mask.size() && mask[j + 1]) ++j;
    out.push_back({grid.cell_onset(i), grid.cell_offset(j)});
    i = j + 1;
  }
  return Timeline(std::move(out));
}

}  // namespace ovl
