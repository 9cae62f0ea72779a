#include "ovl/reseg.h"

#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>

#include "ovl/error.h"

namespace ovl {
namespace {

using Eigen::Index;

constexpr double kMinVariance = 1e-10;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const double top = v.maxCoeff();
  if (top == kNegInf) return kNegInf;
  return top + std::log((v.array() - top).exp().sum());
}

std::vector<Index> voiced_frames(const PosteriorMatrix& q) {
  std::vector<Index> out;
  for (std::size_t t = 0; t < q.num_frames(); ++t) {
    if (q.voiced(t)) out.push_back(static_cast<Index>(t));
  }
  return out;
}

}  // namespace

void ResegConfig::validate() const {
  if (!(loop_probability > 0.0 && loop_probability < 1.0)) {
    throw UsageError("loop probability must lie in (0, 1)");
  }
  if (n_iterations < 0) throw UsageError("number of iterations must be non-negative");
  if (!(variance_floor > 0.0)) throw UsageError("variance floor must be positive");
}

PosteriorMatrix init_q(const Annotation& baseline, const Timeline& vad, const FrameGrid& grid) {
  PosteriorMatrix out;
  out.speaker_ids = baseline.speakers();
  if (out.speaker_ids.empty()) throw DataError("baseline diarization names no speaker");
  out.frame_step = grid.step;
  out.start_time = grid.start_time;
  const auto S = static_cast<Index>(out.speaker_ids.size());
  const auto T = static_cast<Index>(grid.size);
  out.q = Eigen::MatrixXd::Zero(S, T);

  const auto voiced = rasterize(vad, grid);
  std::vector<int> label(grid.size, -1);
  for (Index s = S - 1; s >= 0; --s) {
    const auto mask =
        rasterize(baseline.speaker_timeline(out.speaker_ids[static_cast<std::size_t>(s)]), grid);
    for (std::size_t t = 0; t < grid.size; ++t) {
      if (mask[t]) label[t] = static_cast<int>(s);
    }
  }

  // Nearest labeled cell for voiced cells the baseline leaves unlabeled.
  std::vector<long long> prev(grid.size, -1), next(grid.size, -1);
  long long last = -1;
  for (std::size_t t = 0; t < grid.size; ++t) {
    if (label[t] >= 0) last = static_cast<long long>(t);
    prev[t] = last;
  }
  last = -1;
  for (std::size_t t = grid.size; t-- > 0;) {
    if (label[t] >= 0) last = static_cast<long long>(t);
    next[t] = last;
  }
  for (std::size_t t = 0; t < grid.size; ++t) {
    if (!voiced[t]) continue;
    int s = label[t];
    if (s < 0) {
      const auto ti = static_cast<long long>(t);
      if (prev[t] < 0 && next[t] < 0) {
        s = 0;
      } else if (next[t] < 0 || (prev[t] >= 0 && ti - prev[t] <= next[t] - ti)) {
        s = label[static_cast<std::size_t>(prev[t])];
      } else {
        s = label[static_cast<std::size_t>(next[t])];
      }
    }
    out.q(s, static_cast<Index>(t)) = 1.0;
  }
  return out;
}

ForwardBackwardResult forward_backward(const Eigen::MatrixXd& log_emissions,
                                       double loop_probability) {
  const Index S = log_emissions.rows();
  const Index T = log_emissions.cols();
  ForwardBackwardResult out;
  out.posteriors.resize(S, T);
  if (S == 0 || T == 0) return out;
  if (S == 1) {
    out.posteriors.setOnes();
    out.log_likelihood = log_emissions.sum();
    return out;
  }
  Eigen::MatrixXd log_trans =
      Eigen::MatrixXd::Constant(S, S, std::log((1.0 - loop_probability) / static_cast<double>(S - 1)));
  log_trans.diagonal().setConstant(std::log(loop_probability));
  const double log_init = -std::log(static_cast<double>(S));

  Eigen::MatrixXd alpha(S, T), beta(S, T);
  Eigen::VectorXd work(S);
  alpha.col(0) = log_emissions.col(0).array() + log_init;
  for (Index t = 1; t < T; ++t) {
    for (Index j = 0; j < S; ++j) {
      work = alpha.col(t - 1) + log_trans.col(j);
      alpha(j, t) = log_sum_exp(work) + log_emissions(j, t);
    }
  }
  beta.col(T - 1).setZero();
  for (Index t = T - 2; t >= 0; --t) {
    for (Index i = 0; i < S; ++i) {
      work = log_trans.row(i).transpose() + log_emissions.col(t + 1) + beta.col(t + 1);
      beta(i, t) = log_sum_exp(work);
    }
  }
  out.log_likelihood = log_sum_exp(alpha.col(T - 1));
  for (Index t = 0; t < T; ++t) {
    work = alpha.col(t) + beta.col(t);
    const double norm = log_sum_exp(work);
    out.posteriors.col(t) = (work.array() - norm).exp();
    out.posteriors.col(t) /= out.posteriors.col(t).sum();
  }
  return out;
}

double DiagonalGaussian::log_density(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  const double d = static_cast<double>(mean.size());
  return -0.5 * (d * std::log(2.0 * std::numbers::pi) + variance.array().log().sum() +
                 ((x - mean).array().square() / variance.array()).sum());
}

std::vector<DiagonalGaussian> estimate_emissions(const FeatureMatrix& features,
                                                 const PosteriorMatrix& q,
                                                 double variance_floor) {
  const std::vector<Index> voiced = voiced_frames(q);
  const Index D = features.frames.cols();
  if (voiced.empty()) throw DataError("no voiced frames to estimate emissions from");

  Eigen::VectorXd global_mean = Eigen::VectorXd::Zero(D);
  for (Index t : voiced) global_mean += features.frames.row(t).transpose();
  global_mean /= static_cast<double>(voiced.size());
  Eigen::VectorXd global_var = Eigen::VectorXd::Zero(D);
  for (Index t : voiced) {
    global_var += (features.frames.row(t).transpose() - global_mean).cwiseAbs2();
  }
  global_var /= static_cast<double>(voiced.size());
  const Eigen::VectorXd floor = (global_var * variance_floor).cwiseMax(kMinVariance);

  std::vector<DiagonalGaussian> out;
  for (Index s = 0; s < q.q.rows(); ++s) {
    double weight = 0.0;
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(D);
    for (Index t : voiced) {
      weight += q.q(s, t);
      mean += q.q(s, t) * features.frames.row(t).transpose();
    }
    if (weight <= 0.0) {
      out.push_back({global_mean, global_var.cwiseMax(floor)});
      continue;
    }
    mean /= weight;
    Eigen::VectorXd var = Eigen::VectorXd::Zero(D);
    for (Index t : voiced) {
      var += q.q(s, t) * (features.frames.row(t).transpose() - mean).cwiseAbs2();
    }
    var /= weight;
    out.push_back({mean, var.cwiseMax(floor)});
  }
  return out;
}

PosteriorMatrix resegment(const FeatureMatrix& features, const PosteriorMatrix& q0,
                          const ResegConfig& config) {
  config.validate();
  if (features.num_frames() != q0.num_frames()) {
    throw DataError("features and posterior matrix are on different frame grids");
  }
  if (std::abs(features.frame_step - q0.frame_step) > 1e-12) {
    throw DataError("features and posterior matrix use different frame steps");
  }
  if (q0.num_speakers() <= 1) return q0;

  PosteriorMatrix q = q0;
  const std::vector<Index> voiced = voiced_frames(q0);
  if (voiced.empty()) return q;
  const auto S = static_cast<Index>(q.num_speakers());
  const auto V = static_cast<Index>(voiced.size());
  for (int iter = 0; iter < config.n_iterations; ++iter) {
    const auto emissions = estimate_emissions(features, q, config.variance_floor);
    Eigen::MatrixXd log_e(S, V);
    for (Index v = 0; v < V; ++v) {
      const auto x = features.frames.row(voiced[static_cast<std::size_t>(v)]).transpose();
      for (Index s = 0; s < S; ++s) log_e(s, v) = emissions[static_cast<std::size_t>(s)].log_density(x);
    }
    if (!log_e.allFinite()) throw NumericalError("non-finite emission likelihoods");
    const ForwardBackwardResult fb = forward_backward(log_e, config.loop_probability);
    for (Index v = 0; v < V; ++v) q.q.col(voiced[static_cast<std::size_t>(v)]) = fb.posteriors.col(v);
  }
  return q;
}

void write_posteriors(const PosteriorMatrix& q, std::ostream& out) {
  out << "# speaker_ids:";
  for (const auto& id : q.speaker_ids) out << ' ' << id;
  out << "\n# frame_step: " << q.frame_step << "\n# start_time: " << q.start_time << '\n';
  out << std::setprecision(6);
  for (Index s = 0; s < q.q.rows(); ++s) {
    for (Index t = 0; t < q.q.cols(); ++t) out << (t ? " " : "") << q.q(s, t);
    out << '\n';
  }
}

}  // namespace ovl
