#pragma once

#include <Eigen/Core>
#include <iosfwd>
#include <string>
#include <vector>

#include "ovl/features.h"
#include "ovl/timeline.h"

namespace ovl {

/// S x T per-frame speaker posteriors. Voiced columns sum to one, unvoiced
/// columns are all zero.
struct PosteriorMatrix {
  Eigen::MatrixXd q;
  std::vector<std::string> speaker_ids;
  double frame_step = 0.01;
  double start_time = 0.0;

  std::size_t num_speakers() const { return static_cast<std::size_t>(q.rows()); }
  std::size_t num_frames() const { return static_cast<std::size_t>(q.cols()); }
  FrameGrid grid() const { return {start_time, frame_step, num_frames()}; }
  bool voiced(std::size_t t) const { return q.col(static_cast<Eigen::Index>(t)).sum() > 0.0; }
};

struct ResegConfig {
  double loop_probability = 0.95;
  int n_iterations = 1;
  // Relative to the global per-dimension variance of voiced frames.
  double variance_floor = 1e-3;

  void validate() const;
};

/// One-hot columns on voiced cells (rasterized by midpoint). Speaker rows are
/// the baseline's speakers in sorted order. A voiced cell where the baseline
/// names nobody takes the speaker of the nearest labeled cell (earlier cell on
/// ties); where it names several, the lowest row wins.
PosteriorMatrix init_q(const Annotation& baseline, const Timeline& vad, const FrameGrid& grid);

struct ForwardBackwardResult {
  Eigen::MatrixXd posteriors;  // S x T
  double log_likelihood = 0.0;
};

/// Log-domain forward-backward over an S-state chain with self-transition
/// `loop_probability`, the rest spread evenly, and a uniform initial
/// distribution. `log_emissions` is S x T.
ForwardBackwardResult forward_backward(const Eigen::MatrixXd& log_emissions,
                                       double loop_probability);

struct DiagonalGaussian {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;

  double log_density(const Eigen::Ref<const Eigen::VectorXd>& x) const;
};

/// Q-weighted mean and variance per speaker over voiced frames, variances
/// floored at variance_floor times the global variance. A speaker with no
/// weight gets the global statistics.
std::vector<DiagonalGaussian> estimate_emissions(const FeatureMatrix& features,
                                                 const PosteriorMatrix& q,
                                                 double variance_floor);

/// Alternates emission re-estimation and forward-backward over the voiced
/// frames (concatenated) for n_iterations rounds.
PosteriorMatrix resegment(const FeatureMatrix& features, const PosteriorMatrix& q0,
                          const ResegConfig& config);

/// Header lines "# speaker_ids: ...", "# frame_step: ...", "# start_time: ...",
/// then one row of T values per speaker.
void write_posteriors(const PosteriorMatrix& q, std::ostream& out);

}  // namespace ovl
