#include "ovl/detector.h"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ovl/error.h"

namespace ovl {
namespace {

using Mat = Eigen::MatrixXd;
using Eigen::Index;

constexpr double kProbabilityFloor = 1e-12;
constexpr const char* kModelMagic = "OVLDMODEL";
constexpr int kModelVersion = 1;

std::string lstm_name(int layer, int direction, const char* tensor) {
  return "lstm" + std::to_string(layer) + (direction == 0 ? ".fwd." : ".bwd.") + tensor;
}

std::string ff_name(int layer, const char* tensor) {
  return "ff" + std::to_string(layer) + "." + tensor;
}

std::vector<TensorInfo> make_layout(const LabelerConfig& c) {
  std::vector<TensorInfo> layout;
  std::size_t offset = 0;
  auto add = [&](std::string name, Index rows, Index cols) {
    layout.push_back({std::move(name), rows, cols, offset});
    offset += static_cast<std::size_t>(rows * cols);
  };
  const Index H = c.recurrent_units;
  Index in = c.input_dim;
  for (int l = 0; l < c.recurrent_layers; ++l) {
    for (int d = 0; d < 2; ++d) {
      add(lstm_name(l, d, "W"), 4 * H, in);
      add(lstm_name(l, d, "U"), 4 * H, H);
      add(lstm_name(l, d, "b"), 4 * H, 1);
    }
    in = 2 * H;
  }
  for (int k = 0; k < c.ff_layers; ++k) {
    add(ff_name(k, "W"), c.ff_units, in);
    add(ff_name(k, "b"), c.ff_units, 1);
    in = c.ff_units;
  }
  add("out.W", c.output_classes, in);
  add("out.b", c.output_classes, 1);
  return layout;
}

// Writable block expressions arrive as const temporaries (Eigen idiom).
template <typename Derived>
void sigmoid_inplace(const Eigen::MatrixBase<Derived>& block) {
  auto& x = const_cast<Eigen::MatrixBase<Derived>&>(block);
  x.array() = (1.0 + (-x.array()).exp()).inverse();
}

template <typename Derived>
void tanh_inplace(const Eigen::MatrixBase<Derived>& block) {
  auto& x = const_cast<Eigen::MatrixBase<Derived>&>(block);
  x.array() = x.array().tanh();
}

struct DirectionCache {
  Mat gates;   // 4H x N, post-activation
  Mat cell;    // H x N
  Mat hidden;  // H x N
};

struct LayerCache {
  Mat input;
  DirectionCache dir[2];
};

// Columns are time-major: column t*B + b holds item b at step t.
struct ForwardPass {
  Index steps = 0;
  Index batch = 0;
  std::vector<LayerCache> lstm;
  Mat recurrent_out;
  std::vector<Mat> ff_out;
  Mat probs;
};

Mat pack_inputs(const LabelerModel& model, std::span<const RowMatrix> sequences) {
  if (sequences.empty()) throw DataError("empty batch");
  const Index T = sequences.front().rows();
  const auto B = static_cast<Index>(sequences.size());
  const Index D = model.config.input_dim;
  if (T < 1) throw DataError("sequence must contain at least one frame");
  Mat X(D, T * B);
  for (Index b = 0; b < B; ++b) {
    const RowMatrix& seq = sequences[static_cast<std::size_t>(b)];
    if (seq.cols() != D) {
      throw DataError("feature dimension " + std::to_string(seq.cols()) +
                      " does not match model input_dim " + std::to_string(D));
    }
    if (seq.rows() != T) throw DataError("batch items must share one length");
    for (Index t = 0; t < T; ++t) {
      X.col(t * B + b) =
          ((seq.row(t).transpose() - model.input_mean).array() * model.input_scale.array())
              .matrix();
    }
  }
  return X;
}

void run_direction(const ParameterSet& p, int layer, int dir, const Mat& X, Index T, Index B,
                   DirectionCache& cache) {
  const auto W = p.tensor(lstm_name(layer, dir, "W"));
  const auto U = p.tensor(lstm_name(layer, dir, "U"));
  const auto bias = p.tensor(lstm_name(layer, dir, "b"));
  const Index H = U.cols();
  Mat Z = W * X;
  Z.colwise() += bias.col(0);
  cache.cell.resize(H, T * B);
  cache.hidden.resize(H, T * B);
  Mat h_prev = Mat::Zero(H, B);
  Mat c_prev = Mat::Zero(H, B);
  for (Index s = 0; s < T; ++s) {
    const Index t = dir == 0 ? s : T - 1 - s;
    auto z = Z.middleCols(t * B, B);
    z.noalias() += U * h_prev;
    sigmoid_inplace(z.topRows(2 * H));
    tanh_inplace(z.middleRows(2 * H, H));
    sigmoid_inplace(z.bottomRows(H));
    auto c = cache.cell.middleCols(t * B, B);
    auto h = cache.hidden.middleCols(t * B, B);
    c = z.middleRows(H, H).cwiseProduct(c_prev) + z.topRows(H).cwiseProduct(z.middleRows(2 * H, H));
    h = z.bottomRows(H).cwiseProduct(c.array().tanh().matrix());
    h_prev = h;
    c_prev = c;
  }
  cache.gates = std::move(Z);
}

ForwardPass run_forward(const LabelerModel& model, Mat X, Index T, Index B, bool keep_cache) {
  const auto& c = model.config;
  const auto& p = model.params;
  const Index H = c.recurrent_units;
  ForwardPass fp;
  fp.steps = T;
  fp.batch = B;
  fp.lstm.resize(static_cast<std::size_t>(c.recurrent_layers));
  Mat layer_in = std::move(X);
  for (int l = 0; l < c.recurrent_layers; ++l) {
    LayerCache& lc = fp.lstm[static_cast<std::size_t>(l)];
    for (int d = 0; d < 2; ++d) run_direction(p, l, d, layer_in, T, B, lc.dir[d]);
    Mat out(2 * H, T * B);
    out.topRows(H) = lc.dir[0].hidden;
    out.bottomRows(H) = lc.dir[1].hidden;
    if (keep_cache) {
      lc.input = std::move(layer_in);
    } else {
      lc = LayerCache{};
    }
    layer_in = std::move(out);
  }
  fp.recurrent_out = layer_in;
  for (int k = 0; k < c.ff_layers; ++k) {
    Mat a = p.tensor(ff_name(k, "W")) * layer_in;
    a.colwise() += p.tensor(ff_name(k, "b")).col(0);
    tanh_inplace(a);
    layer_in = a;
    fp.ff_out.push_back(std::move(a));
  }
  Mat logits = p.tensor("out.W") * layer_in;
  logits.colwise() += p.tensor("out.b").col(0);
  const Eigen::RowVectorXd top = logits.colwise().maxCoeff();
  logits.rowwise() -= top;
  Mat e = logits.array().exp().matrix();
  const Eigen::RowVectorXd total = e.colwise().sum();
  e.array().rowwise() /= total.array();
  fp.probs = std::move(e);
  return fp;
}

std::vector<RowMatrix> unpack_probs(const Mat& probs, Index T, Index B) {
  std::vector<RowMatrix> out(static_cast<std::size_t>(B), RowMatrix(T, probs.rows()));
  for (Index t = 0; t < T; ++t) {
    for (Index b = 0; b < B; ++b) {
      out[static_cast<std::size_t>(b)].row(t) = probs.col(t * B + b).transpose();
    }
  }
  return out;
}

double cross_entropy(const Mat& probs, std::span<const LabelSequence> labels, Index T, Index B) {
  double total = 0.0;
  for (Index b = 0; b < B; ++b) {
    const auto& y = labels[static_cast<std::size_t>(b)].labels;
    if (static_cast<Index>(y.size()) != T) throw DataError("label length does not match input");
    for (Index t = 0; t < T; ++t) {
      total -= std::log(std::max(probs(y[static_cast<std::size_t>(t)], t * B + b), kProbabilityFloor));
    }
  }
  return total / static_cast<double>(T * B);
}

void backward_direction(const ParameterSet& p, ParameterSet& g, int layer, int dir,
                        const Mat& X, const DirectionCache& cache, const Mat& dH, Index T,
                        Index B, Mat& dX) {
  const auto W = p.tensor(lstm_name(layer, dir, "W"));
  const auto U = p.tensor(lstm_name(layer, dir, "U"));
  const Index H = U.cols();
  Mat dZ(4 * H, T * B);
  Mat h_prev_all = Mat::Zero(H, T * B);
  Mat dh_next = Mat::Zero(H, B);
  Mat dc_next = Mat::Zero(H, B);
  const Mat zeros = Mat::Zero(H, B);
  for (Index s = T - 1; s >= 0; --s) {
    const Index t = dir == 0 ? s : T - 1 - s;
    const Index tp = dir == 0 ? t - 1 : t + 1;
    const auto gates = cache.gates.middleCols(t * B, B);
    const auto i = gates.topRows(H).array();
    const auto f = gates.middleRows(H, H).array();
    const auto gg = gates.middleRows(2 * H, H).array();
    const auto o = gates.bottomRows(H).array();
    const Mat c_prev = s > 0 ? Mat(cache.cell.middleCols(tp * B, B)) : zeros;
    if (s > 0) h_prev_all.middleCols(t * B, B) = cache.hidden.middleCols(tp * B, B);

    const Eigen::ArrayXXd tc = cache.cell.middleCols(t * B, B).array().tanh();
    const Eigen::ArrayXXd dh = (dH.middleCols(t * B, B) + dh_next).array();
    const Eigen::ArrayXXd dc = dc_next.array() + dh * o * (1.0 - tc.square());
    auto dz = dZ.middleCols(t * B, B);
    dz.topRows(H) = (dc * gg * i * (1.0 - i)).matrix();
    dz.middleRows(H, H) = (dc * c_prev.array() * f * (1.0 - f)).matrix();
    dz.middleRows(2 * H, H) = (dc * i * (1.0 - gg.square())).matrix();
    dz.bottomRows(H) = (dh * tc * o * (1.0 - o)).matrix();
    dc_next = (dc * f).matrix();
    dh_next.noalias() = U.transpose() * dz;
  }
  g.tensor(lstm_name(layer, dir, "W")).noalias() += dZ * X.transpose();
  g.tensor(lstm_name(layer, dir, "U")).noalias() += dZ * h_prev_all.transpose();
  g.tensor(lstm_name(layer, dir, "b")).col(0) += dZ.rowwise().sum();
  dX.noalias() += W.transpose() * dZ;
}

void check_finite(double value, const char* what) {
  if (!std::isfinite(value)) throw NumericalError(std::string(what) + " is not finite");
}

}  // namespace

void LabelerConfig::validate() const {
  if (input_dim < 1 || recurrent_layers < 1 || recurrent_units < 1 || ff_layers < 0 ||
      ff_units < 1) {
    throw UsageError("labeler dimensions must be positive");
  }
  if (output_classes != 2) throw UsageError("labeler must have exactly 2 output classes");
}

ParameterSet::ParameterSet(const LabelerConfig& config)
    : layout_(std::make_shared<const std::vector<TensorInfo>>(make_layout(config))) {
  const auto& last = layout_->back();
  values_.assign(last.offset + static_cast<std::size_t>(last.rows * last.cols), 0.0);
}

const TensorInfo& ParameterSet::info(std::string_view name) const {
  for (const auto& t : *layout_) {
    if (t.name == name) return t;
  }
  throw DataError("unknown parameter tensor '" + std::string(name) + "'");
}

Eigen::Map<Eigen::MatrixXd> ParameterSet::tensor(std::string_view name) {
  const auto& t = info(name);
  return {values_.data() + t.offset, t.rows, t.cols};
}

Eigen::Map<const Eigen::MatrixXd> ParameterSet::tensor(std::string_view name) const {
  const auto& t = info(name);
  return {values_.data() + t.offset, t.rows, t.cols};
}

double ParameterSet::norm() const {
  return Eigen::Map<const Eigen::VectorXd>(values_.data(), static_cast<Index>(values_.size()))
      .norm();
}

LabelerModel LabelerModel::zeros(const LabelerConfig& config) {
  config.validate();
  LabelerModel m;
  m.config = config;
  m.params = ParameterSet(config);
  m.input_mean = Eigen::VectorXd::Zero(config.input_dim);
  m.input_scale = Eigen::VectorXd::Ones(config.input_dim);
  return m;
}

LabelerModel LabelerModel::initialize(const LabelerConfig& config, std::uint64_t seed) {
  LabelerModel m = zeros(config);
  m.metadata.seed = seed;
  std::mt19937_64 rng(seed);
  Index input_fan_in = 1;
  for (const auto& t : m.params.layout()) {
    // Biases use the bound of their layer's input weights.
    if (t.name.ends_with(".W")) input_fan_in = t.cols;
    const Index fan_in = t.name.ends_with(".b") ? input_fan_in : t.cols;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> uniform(-bound, bound);
    auto view = m.params.tensor(t.name);
    for (Index j = 0; j < view.cols(); ++j) {
      for (Index i = 0; i < view.rows(); ++i) view(i, j) = uniform(rng);
    }
    if (t.name.starts_with("lstm") && t.name.ends_with(".b")) {
      const Index H = config.recurrent_units;
      view.col(0).segment(H, H).setConstant(1.0);
    }
  }
  return m;
}

bool LabelerModel::finite() const {
  for (double v : params.values()) {
    if (!std::isfinite(v)) return false;
  }
  return input_mean.allFinite() && input_scale.allFinite();
}

std::vector<RowMatrix> forward_batch(const LabelerModel& model,
                                     std::span<const RowMatrix> sequences) {
  Mat X = pack_inputs(model, sequences);
  const Index T = sequences.front().rows();
  const auto B = static_cast<Index>(sequences.size());
  ForwardPass fp = run_forward(model, std::move(X), T, B, false);
  return unpack_probs(fp.probs, T, B);
}

ScoreSequence forward(const LabelerModel& model, const FeatureMatrix& features) {
  ScoreSequence out;
  out.frame_step = features.frame_step;
  out.start_time = features.start_time;
  out.scores = std::move(forward_batch(model, std::span<const RowMatrix>(&features.frames, 1))[0]);
  return out;
}

double bce_loss(const ScoreSequence& scores, const LabelSequence& labels) {
  if (scores.num_frames() != labels.size()) {
    throw DataError("score and label sequences differ in length");
  }
  if (labels.size() == 0) return 0.0;
  double total = 0.0;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    total -= std::log(std::max(scores.scores(static_cast<Index>(t), labels.labels[t]),
                               kProbabilityFloor));
  }
  return total / static_cast<double>(labels.size());
}

double batch_loss(const LabelerModel& model, std::span<const RowMatrix> inputs,
                  std::span<const LabelSequence> labels) {
  if (inputs.size() != labels.size()) throw DataError("inputs and labels differ in count");
  Mat X = pack_inputs(model, inputs);
  const Index T = inputs.front().rows();
  const auto B = static_cast<Index>(inputs.size());
  ForwardPass fp = run_forward(model, std::move(X), T, B, false);
  return cross_entropy(fp.probs, labels, T, B);
}

LossAndGradient backward(const LabelerModel& model, std::span<const RowMatrix> inputs,
                         std::span<const LabelSequence> labels) {
  if (inputs.size() != labels.size()) throw DataError("inputs and labels differ in count");
  const auto& c = model.config;
  const auto& p = model.params;
  Mat X = pack_inputs(model, inputs);
  const Index T = inputs.front().rows();
  const auto B = static_cast<Index>(inputs.size());
  const Index N = T * B;
  const Index H = c.recurrent_units;
  ForwardPass fp = run_forward(model, std::move(X), T, B, true);

  LossAndGradient out;
  out.loss = cross_entropy(fp.probs, labels, T, B);
  out.gradient = ParameterSet(c);
  ParameterSet& g = out.gradient;

  Mat delta = fp.probs;
  for (Index b = 0; b < B; ++b) {
    const auto& y = labels[static_cast<std::size_t>(b)].labels;
    for (Index t = 0; t < T; ++t) delta(y[static_cast<std::size_t>(t)], t * B + b) -= 1.0;
  }
  delta /= static_cast<double>(N);

  const Mat& last = c.ff_layers > 0 ? fp.ff_out.back() : fp.recurrent_out;
  g.tensor("out.W").noalias() = delta * last.transpose();
  g.tensor("out.b").col(0) = delta.rowwise().sum();
  Mat upstream = p.tensor("out.W").transpose() * delta;

  for (int k = c.ff_layers - 1; k >= 0; --k) {
    const Mat& a = fp.ff_out[static_cast<std::size_t>(k)];
    const Mat& below = k > 0 ? fp.ff_out[static_cast<std::size_t>(k - 1)] : fp.recurrent_out;
    Mat dz = (upstream.array() * (1.0 - a.array().square())).matrix();
    g.tensor(ff_name(k, "W")).noalias() = dz * below.transpose();
    g.tensor(ff_name(k, "b")).col(0) = dz.rowwise().sum();
    upstream = p.tensor(ff_name(k, "W")).transpose() * dz;
  }

  for (int l = c.recurrent_layers - 1; l >= 0; --l) {
    const LayerCache& lc = fp.lstm[static_cast<std::size_t>(l)];
    Mat dX = Mat::Zero(lc.input.rows(), N);
    for (int d = 0; d < 2; ++d) {
      const Mat dH = upstream.middleRows(d * H, H);
      backward_direction(p, g, l, d, lc.input, lc.dir[d], dH, T, B, dX);
    }
    upstream = std::move(dX);
  }
  return out;
}

LossAndGradient backward(const LabelerModel& model, const FeatureMatrix& x,
                         const LabelSequence& y) {
  return backward(model, std::span<const RowMatrix>(&x.frames, 1),
                  std::span<const LabelSequence>(&y, 1));
}

TrainResult train(const BatchSampler& sampler, const LabelerConfig& config,
                  const TrainOptions& options, const EpochCallback& on_epoch) {
  config.validate();
  if (options.batch_size < 1) throw UsageError("batch size must be at least 1");
  TrainResult result;
  result.model = LabelerModel::initialize(config, options.seed);
  if (options.epochs == 0) return result;

  std::seed_seq seq{options.seed, std::uint64_t{0x5eed}};
  std::mt19937_64 rng(seq);

  // Input standardization from a few sampled batches.
  if (options.normalization_batches > 0) {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(config.input_dim);
    Eigen::VectorXd sq = Eigen::VectorXd::Zero(config.input_dim);
    double count = 0.0;
    for (std::size_t i = 0; i < options.normalization_batches; ++i) {
      for (const auto& item : sampler(options.batch_size, rng)) {
        if (item.features.frames.cols() != config.input_dim) {
          throw DataError("feature dimension does not match model input_dim");
        }
        sum += item.features.frames.colwise().sum().transpose();
        sq += item.features.frames.array().square().colwise().sum().matrix().transpose();
        count += static_cast<double>(item.features.frames.rows());
      }
    }
    const Eigen::VectorXd mean = sum / count;
    const Eigen::VectorXd var = (sq / count - mean.cwiseAbs2()).cwiseMax(0.0);
    result.model.input_mean = mean;
    result.model.input_scale = (var.array().sqrt().max(1e-8)).inverse().matrix();
  }

  LabelerModel& model = result.model;
  ParameterVector& w = model.params.values();
  bool first = true;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    double epoch_total = 0.0;
    for (std::size_t step = 0; step < options.batches_per_epoch; ++step) {
      std::vector<TrainingItem> batch = sampler(options.batch_size, rng);
      std::vector<RowMatrix> inputs;
      std::vector<LabelSequence> labels;
      inputs.reserve(batch.size());
      labels.reserve(batch.size());
      for (auto& item : batch) {
        inputs.push_back(std::move(item.features.frames));
        labels.push_back(std::move(item.labels));
      }
      LossAndGradient lg = backward(model, inputs, labels);
      check_finite(lg.loss, "training loss");
      if (first) {
        result.initial_loss = lg.loss;
        first = false;
      }
      epoch_total += lg.loss;
      const double norm = lg.gradient.norm();
      check_finite(norm, "gradient norm");
      const double scale =
          norm > options.clip_norm ? options.clip_norm / norm : 1.0;
      const auto& gv = lg.gradient.values();
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= options.learning_rate * scale * gv[i];
    }
    const double mean_loss = epoch_total / static_cast<double>(std::max<std::size_t>(1, options.batches_per_epoch));
    result.epoch_losses.push_back(mean_loss);
    if (on_epoch) on_epoch(epoch, mean_loss);
  }
  if (!model.finite()) throw NumericalError("training produced non-finite parameters");
  model.metadata.epochs = options.epochs;
  model.metadata.seed = options.seed;
  model.metadata.loss_trace = result.epoch_losses;
  return result;
}

TrainResult train(std::span<const Recording> corpus, const LabelerConfig& config,
                  const TrainOptions& options, const BatchOptions& batch_options,
                  const EpochCallback& on_epoch) {
  if (corpus.empty()) throw DataError("empty corpus");
  if (batch_options.features.dim() != config.input_dim) {
    throw UsageError("feature configuration does not match model input_dim");
  }
  BatchSampler sampler = [corpus, &batch_options](std::size_t n, std::mt19937_64& rng) {
    return sample_batch(corpus, n, batch_options, rng);
  };
  return train(sampler, config, options, on_epoch);
}

void save_model(const LabelerModel& model, const std::string& path) {
  static_assert(std::endian::native == std::endian::little, "model files are little-endian");
  nlohmann::json header;
  header["format"] = "ovldiar-labeler";
  header["version"] = kModelVersion;
  const auto& c = model.config;
  header["config"] = {{"input_dim", c.input_dim},
                      {"recurrent_layers", c.recurrent_layers},
                      {"recurrent_units", c.recurrent_units},
                      {"ff_layers", c.ff_layers},
                      {"ff_units", c.ff_units},
                      {"ff_activation", "tanh"},
                      {"output_classes", c.output_classes}};
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& t : model.params.layout()) {
    tensors.push_back({{"name", t.name}, {"shape", {t.rows, t.cols}}, {"offset", t.offset}});
  }
  header["tensors"] = tensors;
  header["normalization"] = {{"dim", c.input_dim}};
  header["training"] = {{"epochs", model.metadata.epochs},
                        {"seed", model.metadata.seed},
                        {"loss_trace", model.metadata.loss_trace}};
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write model file '" + path + "'");
  out << kModelMagic << '\n' << text.size() << '\n' << text;
  auto write = [&out](const double* data, std::size_t n) {
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
  };
  write(model.params.values().data(), model.params.size());
  write(model.input_mean.data(), static_cast<std::size_t>(model.input_mean.size()));
  write(model.input_scale.data(), static_cast<std::size_t>(model.input_scale.size()));
  if (!out) throw DataError("failed writing model file '" + path + "'");
}

LabelerModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file '" + path + "'");
  std::string magic;
  std::getline(in, magic);
  if (magic != kModelMagic) throw DataError("'" + path + "' is not a labeler model file");
  std::string length_line;
  std::getline(in, length_line);
  std::size_t length = 0;
  try {
    length = std::stoul(length_line);
  } catch (const std::exception&) {
    throw DataError("corrupt model header in '" + path + "'");
  }
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt model header in '" + path + "': " + e.what());
  }
  if (header.value("format", "") != "ovldiar-labeler") throw DataError("unknown model format");
  if (header.value("version", 0) != kModelVersion) {
    throw DataError("unsupported model version in '" + path + "'");
  }
  LabelerConfig c;
  try {
    const auto& jc = header.at("config");
    c.input_dim = jc.at("input_dim");
    c.recurrent_layers = jc.at("recurrent_layers");
    c.recurrent_units = jc.at("recurrent_units");
    c.ff_layers = jc.at("ff_layers");
    c.ff_units = jc.at("ff_units");
    c.output_classes = jc.at("output_classes");
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("incomplete model config: ") + e.what());
  }
  LabelerModel model = LabelerModel::zeros(c);
  const auto& tensors = header.at("tensors");
  const auto layout = model.params.layout();
  if (tensors.size() != layout.size()) throw DataError("model tensor list does not match config");
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (tensors[i].at("name") != layout[i].name ||
        tensors[i].at("shape")[0].get<Index>() != layout[i].rows ||
        tensors[i].at("shape")[1].get<Index>() != layout[i].cols) {
      throw DataError("model tensor '" + layout[i].name + "' has an unexpected shape");
    }
  }
  auto read = [&in, &path](double* data, std::size_t n) {
    in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw DataError("truncated model file '" + path + "'");
  };
  read(model.params.values().data(), model.params.size());
  read(model.input_mean.data(), static_cast<std::size_t>(model.input_mean.size()));
  read(model.input_scale.data(), static_cast<std::size_t>(model.input_scale.size()));
  const auto& tr = header.at("training");
  model.metadata.epochs = tr.value("epochs", std::size_t{0});
  model.metadata.seed = tr.value("seed", std::uint64_t{0});
  model.metadata.loss_trace = tr.value("loss_trace", std::vector<double>{});
  if (!model.finite()) throw DataError("model file contains non-finite parameters");
  return model;
}

}  // namespace ovl
