#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <vector>

#include "ovl/timeline.h"

namespace ovl {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Mono signal.
struct Waveform {
  std::vector<double> samples;
  int sample_rate = 16000;

  double duration() const {
    return static_cast<double>(samples.size()) / static_cast<double>(sample_rate);
  }
  // Throws DataError on a non-positive rate or non-finite samples.
  void validate() const;
};

/// Overlapping analysis windows cut from a waveform, one per row.
struct FrameSet {
  RowMatrix frames;
  int sample_rate = 16000;
  double frame_length = 0.025;
  double frame_step = 0.01;
};

/// T x D feature sequence. Row t describes grid cell t.
struct FeatureMatrix {
  RowMatrix frames;
  double frame_step = 0.01;
  double frame_length = 0.025;
  double start_time = 0.0;

  std::size_t num_frames() const { return static_cast<std::size_t>(frames.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(frames.cols()); }
  FrameGrid grid() const { return {start_time, frame_step, num_frames()}; }
};

struct FeatureConfig {
  int n_coeff = 19;
  int derivative_order = 2;
  int n_filters = 40;
  double frame_length = 0.025;
  double frame_step = 0.01;

  int dim() const { return n_coeff * (derivative_order + 1); }

  // 19 MFCCs + deltas + double deltas = 57.
  static FeatureConfig detector() { return {}; }
  // 20 MFCCs + deltas + double deltas = 60.
  static FeatureConfig resegmentation() {
    FeatureConfig c;
    c.n_coeff = 20;
    return c;
  }
};

/// 1 + floor((n - win) / hop) with win, hop rounded to samples; 0 if the
/// signal is shorter than one window.
std::size_t frame_count(std::size_t num_samples, int sample_rate, double frame_length,
                        double frame_step);

/// Frame i covers samples [i*hop, i*hop + win). Throws DataError("signal too
/// short") when fewer than win samples are available.
FrameSet frame_signal(const Waveform& waveform, double frame_length, double frame_step);

/// Hamming window, power spectrum, `n_filters` triangular mel filters spanning
/// 0 Hz to Nyquist, log floored at 1e-10, orthonormal DCT-II. Returns
/// coefficients c0..c{n_coeff-1}.
FeatureMatrix mfcc(const FrameSet& frames, int n_coeff, int n_filters = 40);

/// Appends regression deltas (5-frame window, edge replication). order 1
/// doubles the dimension, order 2 triples it.
FeatureMatrix add_derivatives(const FeatureMatrix& features, int order);

FeatureMatrix extract_features(const Waveform& waveform, const FeatureConfig& config);

}  // namespace ovl
