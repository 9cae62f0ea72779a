#include "ovl/features.h"

#include <fftw3.h>

#include <cmath>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>

#include "ovl/error.h"

namespace ovl {
namespace {

constexpr double kLogFloor = 1e-10;
constexpr int kDeltaWidth = 2;

std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

// Owns a real-to-complex plan together with its buffers.
class RealFft {
 public:
  explicit RealFft(int size) : size_(size) {
    in_ = fftw_alloc_real(static_cast<std::size_t>(size));
    out_ = fftw_alloc_complex(static_cast<std::size_t>(size / 2 + 1));
    std::lock_guard lock(fftw_planner_mutex());
    plan_ = fftw_plan_dft_r2c_1d(size, in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    {
      std::lock_guard lock(fftw_planner_mutex());
      fftw_destroy_plan(plan_);
    }
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* input() { return in_; }
  int size() const { return size_; }

  // Power spectrum |X_k|^2 for k = 0..size/2.
  void power(Eigen::Ref<Eigen::VectorXd> out) {
    fftw_execute(plan_);
    for (int k = 0; k <= size_ / 2; ++k) {
      out[k] = out_[k][0] * out_[k][0] + out_[k][1] * out_[k][1];
    }
  }

 private:
  int size_;
  double* in_ = nullptr;
  fftw_complex* out_ = nullptr;
  fftw_plan plan_ = nullptr;
};

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// n_filters x (fft_size/2 + 1) triangular weights.
Eigen::MatrixXd mel_filterbank(int n_filters, int fft_size, int sample_rate) {
  const int n_bins = fft_size / 2 + 1;
  const double nyquist = sample_rate / 2.0;
  const double mel_max = hz_to_mel(nyquist);
  std::vector<double> edges(static_cast<std::size_t>(n_filters + 2));
  for (int m = 0; m < n_filters + 2; ++m) {
    edges[static_cast<std::size_t>(m)] = mel_to_hz(mel_max * m / (n_filters + 1));
  }
  Eigen::MatrixXd bank = Eigen::MatrixXd::Zero(n_filters, n_bins);
  for (int m = 0; m < n_filters; ++m) {
    const double lo = edges[static_cast<std::size_t>(m)];
    const double center = edges[static_cast<std::size_t>(m + 1)];
    const double hi = edges[static_cast<std::size_t>(m + 2)];
    for (int k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / fft_size;
      if (f > lo && f <= center) {
        bank(m, k) = (f - lo) / (center - lo);
      } else if (f > center && f < hi) {
        bank(m, k) = (hi - f) / (hi - center);
      }
    }
  }
  return bank;
}

// Orthonormal DCT-II, first n_coeff rows.
Eigen::MatrixXd dct_matrix(int n_coeff, int n_filters) {
  Eigen::MatrixXd dct(n_coeff, n_filters);
  for (int k = 0; k < n_coeff; ++k) {
    const double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / n_filters);
    for (int m = 0; m < n_filters; ++m) {
      dct(k, m) = scale * std::cos(std::numbers::pi * k * (m + 0.5) / n_filters);
    }
  }
  return dct;
}

RowMatrix regression_deltas(const RowMatrix& x) {
  const Eigen::Index T = x.rows();
  RowMatrix d(T, x.cols());
  double norm = 0.0;
  for (int n = 1; n <= kDeltaWidth; ++n) norm += 2.0 * n * n;
  for (Eigen::Index t = 0; t < T; ++t) {
    d.row(t).setZero();
    for (int n = 1; n <= kDeltaWidth; ++n) {
      const Eigen::Index ahead = std::min<Eigen::Index>(t + n, T - 1);
      const Eigen::Index behind = std::max<Eigen::Index>(t - n, 0);
      d.row(t) += n * (x.row(ahead) - x.row(behind));
    }
    d.row(t) /= norm;
  }
  return d;
}

}  // namespace

void Waveform::validate() const {
  if (sample_rate <= 0) throw DataError("sample rate must be positive");
  for (double s : samples) {
    if (!std::isfinite(s)) throw DataError("waveform contains non-finite samples");
  }
}

std::size_t frame_count(std::size_t num_samples, int sample_rate, double frame_length,
                        double frame_step) {
  const auto win = static_cast<std::size_t>(std::llround(frame_length * sample_rate));
  const auto hop = static_cast<std::size_t>(std::llround(frame_step * sample_rate));
  if (win == 0 || hop == 0 || num_samples < win) return 0;
  return 1 + (num_samples - win) / hop;
}

FrameSet frame_signal(const Waveform& waveform, double frame_length, double frame_step) {
  waveform.validate();
  if (!(frame_step > 0.0) || !(frame_length > 0.0)) {
    throw DataError("frame length and step must be positive");
  }
  const auto win = static_cast<Eigen::Index>(std::llround(frame_length * waveform.sample_rate));
  const auto hop = static_cast<Eigen::Index>(std::llround(frame_step * waveform.sample_rate));
  if (win < 1 || hop < 1) throw DataError("frame length and step must span at least one sample");
  const std::size_t n = frame_count(waveform.samples.size(), waveform.sample_rate, frame_length,
                                    frame_step);
  if (n == 0) throw DataError("signal too short");

  FrameSet out;
  out.sample_rate = waveform.sample_rate;
  out.frame_length = frame_length;
  out.frame_step = frame_step;
  out.frames.resize(static_cast<Eigen::Index>(n), win);
  for (Eigen::Index i = 0; i < out.frames.rows(); ++i) {
    out.frames.row(i) =
        Eigen::Map<const Eigen::RowVectorXd>(waveform.samples.data() + i * hop, win);
  }
  return out;
}

FeatureMatrix mfcc(const FrameSet& frames, int n_coeff, int n_filters) {
  if (frames.frames.rows() == 0) throw DataError("mfcc needs at least one frame");
  if (n_coeff < 1 || n_coeff > n_filters) throw DataError("invalid number of coefficients");

  const auto win = static_cast<int>(frames.frames.cols());
  int fft_size = 1;
  while (fft_size < win) fft_size *= 2;

  Eigen::RowVectorXd hamming(win);
  for (int n = 0; n < win; ++n) {
    hamming[n] = win == 1 ? 1.0 : 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * n / (win - 1));
  }
  const Eigen::MatrixXd bank = mel_filterbank(n_filters, fft_size, frames.sample_rate);
  const Eigen::MatrixXd dct = dct_matrix(n_coeff, n_filters);

  RealFft fft(fft_size);
  Eigen::Map<Eigen::RowVectorXd> fft_in(fft.input(), fft_size);
  Eigen::VectorXd power(fft_size / 2 + 1);
  Eigen::VectorXd log_mel(n_filters);

  FeatureMatrix out;
  out.frame_step = frames.frame_step;
  out.frame_length = frames.frame_length;
  out.frames.resize(frames.frames.rows(), n_coeff);
  for (Eigen::Index i = 0; i < frames.frames.rows(); ++i) {
    fft_in.setZero();
    fft_in.head(win) = frames.frames.row(i).cwiseProduct(hamming);
    fft.power(power);
    log_mel = (bank * power).cwiseMax(kLogFloor).array().log();
    out.frames.row(i) = (dct * log_mel).transpose();
  }
  return out;
}

FeatureMatrix add_derivatives(const FeatureMatrix& features, int order) {
  if (order != 1 && order != 2) throw DataError("derivative order must be 1 or 2");
  if (features.frames.rows() < 2 * kDeltaWidth + 1) {
    throw DataError("too few frames for delta regression (need " +
                    std::to_string(2 * kDeltaWidth + 1) + ")");
  }
  const Eigen::Index d = features.frames.cols();
  FeatureMatrix out = features;
  out.frames.resize(features.frames.rows(), d * (order + 1));
  out.frames.leftCols(d) = features.frames;
  RowMatrix delta = regression_deltas(features.frames);
  out.frames.middleCols(d, d) = delta;
  if (order == 2) out.frames.rightCols(d) = regression_deltas(delta);
  return out;
}

FeatureMatrix extract_features(const Waveform& waveform, const FeatureConfig& config) {
  FeatureMatrix f = mfcc(frame_signal(waveform, config.frame_length, config.frame_step),
                         config.n_coeff, config.n_filters);
  if (config.derivative_order > 0) f = add_derivatives(f, config.derivative_order);
  return f;
}

}  // namespace ovl
