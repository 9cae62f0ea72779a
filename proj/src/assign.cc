#include "ovl/assign.h"

#include <algorithm>
#include <map>
#include <numeric>

#include "ovl/error.h"

namespace ovl {
namespace {

// Speaker rows ranked by decreasing posterior, lower row first on ties.
std::vector<std::size_t> rank_speakers(const PosteriorMatrix& q, std::size_t t) {
  std::vector<std::size_t> order(q.num_speakers());
  std::iota(order.begin(), order.end(), 0);
  const auto col = q.q.col(static_cast<Eigen::Index>(t));
  std::stable_sort(order.begin(), order.end(), [&col](std::size_t a, std::size_t b) {
    return col(static_cast<Eigen::Index>(a)) > col(static_cast<Eigen::Index>(b));
  });
  return order;
}

template <typename ChooseFn>
Assignment assign_with(const PosteriorMatrix& q, const Timeline& vad, const Timeline& overlap,
                       ChooseFn choose) {
  if (q.num_speakers() == 0) throw DataError("posterior matrix has no speakers");
  const FrameGrid grid = q.grid();
  const auto voiced = rasterize(vad, grid);
  const auto overlapped = rasterize(overlap, grid);
  Assignment out;
  out.frames.grid = grid;
  out.frames.speakers.resize(grid.size);
  for (std::size_t t = 0; t < grid.size; ++t) {
    if (overlapped[t]) ++out.diagnostics.overlap_frames;
    if (!voiced[t]) {
      if (overlapped[t]) ++out.diagnostics.overlap_frames_outside_vad;
      continue;
    }
    ++out.diagnostics.voiced_frames;
    out.frames.speakers[t] = choose(t, overlapped[t] != 0);
    if (out.frames.speakers[t].size() >= 2) ++out.diagnostics.two_speaker_frames;
  }
  out.annotation = merge_frames(out.frames);
  return out;
}

}  // namespace

Annotation merge_frames(const FrameLabels& labels) {
  if (labels.speakers.size() != labels.grid.size) {
    throw DataError("frame labels do not match their grid");
  }
  Annotation out;
  // Open run start per speaker.
  std::map<std::string, std::size_t> open;
  auto close_runs = [&](std::size_t t, const std::vector<std::string>& current) {
    for (auto it = open.begin(); it != open.end();) {
      if (std::find(current.begin(), current.end(), it->first) == current.end()) {
        out.add({labels.grid.cell_onset(it->second), labels.grid.cell_onset(t)}, it->first);
        it = open.erase(it);
      } else {
        ++it;
      }
    }
  };
  for (std::size_t t = 0; t < labels.grid.size; ++t) {
    const auto& current = labels.speakers[t];
    close_runs(t, current);
    for (const auto& s : current) open.try_emplace(s, t);
  }
  close_runs(labels.grid.size, {});
  return out;
}

FrameLabels rasterize_annotation(const Annotation& annotation, const FrameGrid& grid) {
  FrameLabels out;
  out.grid = grid;
  out.speakers.resize(grid.size);
  for (const auto& speaker : annotation.speakers()) {
    const auto mask = rasterize(annotation.speaker_timeline(speaker), grid);
    for (std::size_t t = 0; t < grid.size; ++t) {
      if (mask[t]) out.speakers[t].push_back(speaker);
    }
  }
  return out;
}

Assignment assign_speakers(const PosteriorMatrix& q, const Timeline& vad,
                           const Timeline& overlap) {
  return assign_with(q, vad, overlap, [&q](std::size_t t, bool overlapped) {
    const auto order = rank_speakers(q, t);
    std::vector<std::string> chosen{q.speaker_ids[order[0]]};
    if (overlapped && order.size() > 1) chosen.push_back(q.speaker_ids[order[1]]);
    return chosen;
  });
}

Assignment assign_oracle(const PosteriorMatrix& q, const Annotation& reference,
                         const Timeline& vad, const Timeline& overlap) {
  const FrameLabels truth = rasterize_annotation(reference, q.grid());
  return assign_with(q, vad, overlap, [&](std::size_t t, bool overlapped) {
    const std::size_t limit = overlapped ? 2 : 1;
    std::vector<std::string> chosen;
    for (const auto& s : truth.speakers[t]) {
      if (chosen.size() < limit) chosen.push_back(s);
    }
    if (chosen.empty()) {
      const auto order = rank_speakers(q, t);
      for (std::size_t k = 0; k < std::min(limit, order.size()); ++k) {
        chosen.push_back(q.speaker_ids[order[k]]);
      }
    }
    return chosen;
  });
}

}  // namespace ovl
