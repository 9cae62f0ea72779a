#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ovl/features.h"
#include "ovl/timeline.h"

namespace ovl {

using SpeakerRegions = std::map<std::string, Timeline>;

/// Fixed-length excerpt with per-speaker activity relative to its start.
struct LabeledChunk {
  Waveform waveform;
  SpeakerRegions speaker_regions;

  double duration() const { return waveform.duration(); }
};

/// Per-frame overlap labels: 1 iff two or more speakers are active.
struct LabelSequence {
  std::vector<std::uint8_t> labels;
  double frame_step = 0.01;
  double start_time = 0.0;

  std::size_t size() const { return labels.size(); }
  FrameGrid grid() const { return {start_time, frame_step, labels.size()}; }
};

/// A recording with its ground-truth speaker turns.
struct Recording {
  std::string uri;
  Waveform audio;
  Annotation reference;
};

struct TrainingItem {
  FeatureMatrix features;
  LabelSequence labels;
  SpeakerRegions speaker_regions;
  bool artificial = false;
  std::size_t saturated_samples = 0;
};

struct BatchOptions {
  double chunk_duration = 2.0;
  double p_artificial = 0.5;
  double min_gain_db = -10.0;
  double max_gain_db = 10.0;
  FeatureConfig features = FeatureConfig::detector();
};

/// Speaker activity is sampled at cell midpoints (t + 0.5) * step.
LabelSequence labels_from_regions(const SpeakerRegions& regions, std::size_t num_frames,
                                  double frame_step, double start_time = 0.0);

/// a + 10^(gain_db/20) * b. Speakers are renamed "a:<id>" and "b:<id>" so the
/// two sets stay disjoint. Samples are neither clipped nor normalized.
LabeledChunk mix_chunks(const LabeledChunk& a, const LabeledChunk& b, double gain_db);

/// Samples with magnitude above 1 (would clip in a fixed-point encoding).
std::size_t count_saturated(const Waveform& waveform);

/// Excerpt [onset, onset + duration) of a recording. onset is in seconds and
/// is rounded to the sample grid.
LabeledChunk extract_chunk(const Recording& recording, double onset, double duration);

/// Draws batch_size random chunks (recordings weighted by duration). Each item
/// is, with probability p_artificial, the mixture of two independently drawn
/// chunks with gain uniform in [min_gain_db, max_gain_db].
std::vector<TrainingItem> sample_batch(std::span<const Recording> corpus, std::size_t batch_size,
                                       const BatchOptions& options, std::mt19937_64& rng);

}  // namespace ovl
