#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ovl/reseg.h"
#include "ovl/timeline.h"

namespace ovl {

/// Per-cell speaker sets on a frame grid.
struct FrameLabels {
  FrameGrid grid;
  std::vector<std::vector<std::string>> speakers;  // grid.size entries
};

struct AssignDiagnostics {
  std::size_t voiced_frames = 0;
  std::size_t overlap_frames = 0;
  std::size_t two_speaker_frames = 0;
  // Overlap cells outside the VAD; they receive no label.
  std::size_t overlap_frames_outside_vad = 0;
};

struct Assignment {
  Annotation annotation;
  FrameLabels frames;
  AssignDiagnostics diagnostics;
};

/// Per speaker, maximal runs of consecutive labeled cells become segments
/// [onset of first cell, offset of last cell).
Annotation merge_frames(const FrameLabels& labels);

/// Speaker sets active at each cell midpoint.
FrameLabels rasterize_annotation(const Annotation& annotation, const FrameGrid& grid);

/// Most likely speaker on every voiced cell; second most likely added on cells
/// that are both voiced and overlapped. Equal posteriors favor the lower row.
Assignment assign_speakers(const PosteriorMatrix& q, const Timeline& vad, const Timeline& overlap);

/// Oracle-assignment ablation: voiced cells take their reference speakers
/// (one outside overlap, up to two inside), falling back to the posterior
/// ranking where the reference names nobody.
Assignment assign_oracle(const PosteriorMatrix& q, const Annotation& reference,
                         const Timeline& vad, const Timeline& overlap);

}  // namespace ovl
