#pragma once

#include <Eigen/Core>
#include <Eigen/StdVector>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ovl/augment.h"
#include "ovl/features.h"

namespace ovl {

/// Bidirectional LSTM stack -> tanh feed-forward stack -> softmax.
struct LabelerConfig {
  int input_dim = 57;
  int recurrent_layers = 2;
  int recurrent_units = 128;  // per direction
  int ff_layers = 2;
  int ff_units = 128;
  int output_classes = 2;

  void validate() const;
  friend bool operator==(const LabelerConfig&, const LabelerConfig&) = default;
};

struct TensorInfo {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  std::size_t offset = 0;
};

// Aligned like Eigen's own storage so vectorized reductions over tensor views
// take the same path on every run.
using ParameterVector = std::vector<double, Eigen::aligned_allocator<double>>;

/// Flat parameter storage with named, shaped views. Gradients use the same
/// layout as the parameters they belong to.
class ParameterSet {
 public:
  ParameterSet() = default;
  explicit ParameterSet(const LabelerConfig& config);

  std::span<const TensorInfo> layout() const { return *layout_; }
  const TensorInfo& info(std::string_view name) const;

  Eigen::Map<Eigen::MatrixXd> tensor(std::string_view name);
  Eigen::Map<const Eigen::MatrixXd> tensor(std::string_view name) const;

  ParameterVector& values() { return values_; }
  const ParameterVector& values() const { return values_; }
  std::size_t size() const { return values_.size(); }

  double norm() const;

  friend bool operator==(const ParameterSet& a, const ParameterSet& b) {
    return a.values_ == b.values_;
  }

 private:
  std::shared_ptr<const std::vector<TensorInfo>> layout_;
  ParameterVector values_;
};

struct TrainingMetadata {
  std::size_t epochs = 0;
  std::uint64_t seed = 0;
  std::vector<double> loss_trace;
};

/// Parameter tensors are named "lstm<l>.<fwd|bwd>.{W,U,b}", "ff<k>.{W,b}" and
/// "out.{W,b}". LSTM gate blocks are ordered input, forget, candidate, output.
/// Inputs are standardized as (x - input_mean) * input_scale before the first
/// layer; those statistics are fixed, not trained.
struct LabelerModel {
  LabelerConfig config;
  ParameterSet params;
  Eigen::VectorXd input_mean;
  Eigen::VectorXd input_scale;
  TrainingMetadata metadata;

  // Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)]; forget-gate bias 1.
  static LabelerModel initialize(const LabelerConfig& config, std::uint64_t seed);
  static LabelerModel zeros(const LabelerConfig& config);

  bool finite() const;
};

/// T x 2 per-frame class posteriors; column 1 is the overlap class.
struct ScoreSequence {
  RowMatrix scores;
  double frame_step = 0.01;
  double start_time = 0.0;

  std::size_t num_frames() const { return static_cast<std::size_t>(scores.rows()); }
  FrameGrid grid() const { return {start_time, frame_step, num_frames()}; }
  double overlap(std::size_t t) const { return scores(static_cast<Eigen::Index>(t), 1); }
};

ScoreSequence forward(const LabelerModel& model, const FeatureMatrix& features);

/// Scores several equal-length sequences in one pass. Each output is T x 2.
std::vector<RowMatrix> forward_batch(const LabelerModel& model,
                                     std::span<const RowMatrix> sequences);

/// Mean over frames of -log max(score[t][y_t], 1e-12).
double bce_loss(const ScoreSequence& scores, const LabelSequence& labels);

struct LossAndGradient {
  double loss = 0.0;
  ParameterSet gradient;
};

/// Mean cross-entropy over all frames of all items and its exact gradient by
/// backpropagation through time. Items must share one length.
LossAndGradient backward(const LabelerModel& model, std::span<const RowMatrix> inputs,
                         std::span<const LabelSequence> labels);
LossAndGradient backward(const LabelerModel& model, const FeatureMatrix& x,
                         const LabelSequence& y);

/// Mean cross-entropy without gradients.
double batch_loss(const LabelerModel& model, std::span<const RowMatrix> inputs,
                  std::span<const LabelSequence> labels);

struct TrainOptions {
  double learning_rate = 0.5;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  std::size_t batches_per_epoch = 50;
  std::uint64_t seed = 0;
  double clip_norm = 5.0;
  std::size_t normalization_batches = 4;
};

struct TrainResult {
  LabelerModel model;
  double initial_loss = 0.0;           // first batch, before any update
  std::vector<double> epoch_losses;    // mean minibatch loss per epoch
};

using BatchSampler = std::function<std::vector<TrainingItem>(std::size_t, std::mt19937_64&)>;
using EpochCallback = std::function<void(std::size_t epoch, double loss)>;

/// Plain SGD with global gradient-norm clipping. Deterministic for a fixed
/// seed and sampler. Throws NumericalError if the loss becomes non-finite.
TrainResult train(const BatchSampler& sampler, const LabelerConfig& config,
                  const TrainOptions& options, const EpochCallback& on_epoch = {});

/// Convenience overload drawing mixed-chunk batches from recordings.
TrainResult train(std::span<const Recording> corpus, const LabelerConfig& config,
                  const TrainOptions& options, const BatchOptions& batch_options = {},
                  const EpochCallback& on_epoch = {});

void save_model(const LabelerModel& model, const std::string& path);
LabelerModel load_model(const std::string& path);

}  // namespace ovl
