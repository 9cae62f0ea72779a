#include "ovl/pipeline.h"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ovl/error.h"

namespace ovl {
namespace {

using nlohmann::json;

void reject_unknown(const json& object, const std::set<std::string>& allowed,
                    const std::string& where) {
  if (!object.is_object()) throw UsageError("config section '" + where + "' must be an object");
  for (const auto& [key, value] : object.items()) {
    if (!allowed.contains(key)) {
      throw UsageError("unknown config key '" + (where.empty() ? key : where + "." + key) + "'");
    }
  }
}

template <typename T>
void read(const json& object, const char* key, T& target) {
  if (object.contains(key)) target = object.at(key).get<T>();
}

}  // namespace

void PipelineConfig::validate() const {
  labeler.validate();
  sliding.validate();
  reseg.validate();
  if (detector_features.dim() != labeler.input_dim) {
    throw UsageError("detector feature dimension " + std::to_string(detector_features.dim()) +
                     " does not match labeler input_dim " + std::to_string(labeler.input_dim));
  }
  for (const auto* f : {&detector_features, &reseg_features}) {
    if (f->n_coeff < 1 || f->derivative_order < 0 || f->derivative_order > 2 ||
        f->n_filters < f->n_coeff || !(f->frame_step > 0.0) || !(f->frame_length > 0.0)) {
      throw UsageError("invalid feature configuration");
    }
  }
  if (!(batches.p_artificial >= 0.0 && batches.p_artificial <= 1.0)) {
    throw UsageError("p_artificial must lie in [0, 1]");
  }
  if (!(batches.chunk_duration > 0.0)) throw UsageError("chunk duration must be positive");
  if (!(training.learning_rate > 0.0) || training.batch_size < 1) {
    throw UsageError("invalid training options");
  }
  if (collar < 0.0) throw UsageError("collar must be non-negative");
  if (!(target_precision > 0.0 && target_precision <= 100.0)) {
    throw UsageError("target precision must lie in (0, 100]");
  }
}

PipelineConfig parse_config(const std::string& json_text) {
  PipelineConfig c;
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw UsageError(std::string("config is not valid JSON: ") + e.what());
  }
  try {
    reject_unknown(root, {"features", "labeler", "training", "sliding", "reseg", "scoring"}, "");
    if (root.contains("features")) {
      const auto& f = root.at("features");
      reject_unknown(f, {"detector_coefficients", "reseg_coefficients", "derivative_order",
                         "mel_filters", "frame_length", "frame_step"},
                     "features");
      read(f, "detector_coefficients", c.detector_features.n_coeff);
      read(f, "reseg_coefficients", c.reseg_features.n_coeff);
      for (auto* fc : {&c.detector_features, &c.reseg_features}) {
        read(f, "derivative_order", fc->derivative_order);
        read(f, "mel_filters", fc->n_filters);
        read(f, "frame_length", fc->frame_length);
        read(f, "frame_step", fc->frame_step);
      }
      c.labeler.input_dim = c.detector_features.dim();
    }
    if (root.contains("labeler")) {
      const auto& l = root.at("labeler");
      reject_unknown(l, {"recurrent_layers", "recurrent_units", "ff_layers", "ff_units"},
                     "labeler");
      read(l, "recurrent_layers", c.labeler.recurrent_layers);
      read(l, "recurrent_units", c.labeler.recurrent_units);
      read(l, "ff_layers", c.labeler.ff_layers);
      read(l, "ff_units", c.labeler.ff_units);
    }
    if (root.contains("training")) {
      const auto& t = root.at("training");
      reject_unknown(t, {"learning_rate", "batch_size", "epochs", "batches_per_epoch", "seed",
                         "clip_norm", "chunk_duration", "p_artificial", "min_gain_db",
                         "max_gain_db"},
                     "training");
      read(t, "learning_rate", c.training.learning_rate);
      read(t, "batch_size", c.training.batch_size);
      read(t, "epochs", c.training.epochs);
      read(t, "batches_per_epoch", c.training.batches_per_epoch);
      read(t, "seed", c.training.seed);
      read(t, "clip_norm", c.training.clip_norm);
      read(t, "chunk_duration", c.batches.chunk_duration);
      read(t, "p_artificial", c.batches.p_artificial);
      read(t, "min_gain_db", c.batches.min_gain_db);
      read(t, "max_gain_db", c.batches.max_gain_db);
    }
    if (root.contains("sliding")) {
      const auto& s = root.at("sliding");
      reject_unknown(s, {"window", "hop", "threshold", "min_duration_on", "min_duration_off"},
                     "sliding");
      read(s, "window", c.sliding.window);
      read(s, "hop", c.sliding.hop);
      read(s, "threshold", c.sliding.threshold);
      read(s, "min_duration_on", c.sliding.min_duration_on);
      read(s, "min_duration_off", c.sliding.min_duration_off);
    }
    if (root.contains("reseg")) {
      const auto& r = root.at("reseg");
      reject_unknown(r, {"loop_probability", "n_iterations", "variance_floor"}, "reseg");
      read(r, "loop_probability", c.reseg.loop_probability);
      read(r, "n_iterations", c.reseg.n_iterations);
      read(r, "variance_floor", c.reseg.variance_floor);
    }
    if (root.contains("scoring")) {
      const auto& s = root.at("scoring");
      reject_unknown(s, {"collar", "target_precision"}, "scoring");
      read(s, "collar", c.collar);
      read(s, "target_precision", c.target_precision);
    }
  } catch (const json::exception& e) {
    throw UsageError(std::string("bad config value: ") + e.what());
  }
  c.batches.features = c.detector_features;
  c.validate();
  return c;
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

std::string dump_config(const PipelineConfig& c) {
  json root = {
      {"features",
       {{"detector_coefficients", c.detector_features.n_coeff},
        {"reseg_coefficients", c.reseg_features.n_coeff},
        {"derivative_order", c.detector_features.derivative_order},
        {"mel_filters", c.detector_features.n_filters},
        {"frame_length", c.detector_features.frame_length},
        {"frame_step", c.detector_features.frame_step}}},
      {"labeler",
       {{"recurrent_layers", c.labeler.recurrent_layers},
        {"recurrent_units", c.labeler.recurrent_units},
        {"ff_layers", c.labeler.ff_layers},
        {"ff_units", c.labeler.ff_units}}},
      {"training",
       {{"learning_rate", c.training.learning_rate},
        {"batch_size", c.training.batch_size},
        {"epochs", c.training.epochs},
        {"batches_per_epoch", c.training.batches_per_epoch},
        {"seed", c.training.seed},
        {"clip_norm", c.training.clip_norm},
        {"chunk_duration", c.batches.chunk_duration},
        {"p_artificial", c.batches.p_artificial},
        {"min_gain_db", c.batches.min_gain_db},
        {"max_gain_db", c.batches.max_gain_db}}},
      {"sliding",
       {{"window", c.sliding.window},
        {"hop", c.sliding.hop},
        {"threshold", c.sliding.threshold},
        {"min_duration_on", c.sliding.min_duration_on},
        {"min_duration_off", c.sliding.min_duration_off}}},
      {"reseg",
       {{"loop_probability", c.reseg.loop_probability},
        {"n_iterations", c.reseg.n_iterations},
        {"variance_floor", c.reseg.variance_floor}}},
      {"scoring", {{"collar", c.collar}, {"target_precision", c.target_precision}}}};
  return root.dump(2);
}

OverlapSource parse_overlap_source(const std::string& text) {
  if (text == "none") return OverlapSource::none;
  if (text == "detected") return OverlapSource::detected;
  if (text == "oracle") return OverlapSource::oracle;
  throw UsageError("overlap source must be none, detected or oracle");
}

AssignSource parse_assign_source(const std::string& text) {
  if (text == "posterior") return AssignSource::posterior;
  if (text == "oracle") return AssignSource::oracle;
  throw UsageError("assignment source must be posterior or oracle");
}

ScoreSequence detect_scores(const LabelerModel& model, const Waveform& audio,
                            const PipelineConfig& config) {
  const FeatureMatrix features = extract_features(audio, config.detector_features);
  return slide_scores(model, features, config.sliding);
}

ResegmentOutcome run_resegmentation(const ResegmentInputs& inputs, const PipelineConfig& config,
                                    OverlapSource overlap_source, AssignSource assign_source) {
  if (inputs.audio == nullptr) throw DataError("resegmentation needs audio");
  const bool needs_reference =
      overlap_source == OverlapSource::oracle || assign_source == AssignSource::oracle;
  if (needs_reference && !inputs.reference) {
    throw UsageError("oracle ablations need a reference annotation");
  }
  const FeatureMatrix features = extract_features(*inputs.audio, config.reseg_features);
  ResegmentOutcome out;
  out.initial = init_q(inputs.baseline, inputs.vad, features.grid());
  out.posterior = resegment(features, out.initial, config.reseg);
  switch (overlap_source) {
    case OverlapSource::none: break;
    case OverlapSource::detected: out.overlap_used = inputs.detected_overlap; break;
    case OverlapSource::oracle: out.overlap_used = overlap_regions(*inputs.reference); break;
  }
  out.assignment = assign_source == AssignSource::oracle
                       ? assign_oracle(out.posterior, *inputs.reference, inputs.vad,
                                       out.overlap_used)
                       : assign_speakers(out.posterior, inputs.vad, out.overlap_used);
  out.assignment.annotation.set_uri(inputs.baseline.uri());
  return out;
}

}  // namespace ovl
