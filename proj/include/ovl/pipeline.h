#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ovl/assign.h"
#include "ovl/augment.h"
#include "ovl/detector.h"
#include "ovl/features.h"
#include "ovl/infer.h"
#include "ovl/metrics.h"
#include "ovl/reseg.h"

namespace ovl {

struct PipelineConfig {
  FeatureConfig detector_features = FeatureConfig::detector();
  FeatureConfig reseg_features = FeatureConfig::resegmentation();
  LabelerConfig labeler;
  TrainOptions training;
  BatchOptions batches;
  SlidingConfig sliding;
  ResegConfig reseg;
  double collar = 0.0;
  double target_precision = 90.0;

  void validate() const;
};

/// JSON object with optional sections "features", "labeler", "training",
/// "sliding", "reseg" and "scoring". Unknown keys are rejected.
PipelineConfig parse_config(const std::string& json_text);
PipelineConfig load_config(const std::string& path);
std::string dump_config(const PipelineConfig& config);

enum class OverlapSource { none, detected, oracle };
enum class AssignSource { posterior, oracle };

OverlapSource parse_overlap_source(const std::string& text);
AssignSource parse_assign_source(const std::string& text);

/// Detector scores for a whole recording.
ScoreSequence detect_scores(const LabelerModel& model, const Waveform& audio,
                            const PipelineConfig& config);

struct ResegmentInputs {
  const Waveform* audio = nullptr;
  Annotation baseline;
  Timeline vad;
  Timeline detected_overlap;
  // Required for the oracle ablations.
  std::optional<Annotation> reference;
};

struct ResegmentOutcome {
  PosteriorMatrix initial;
  PosteriorMatrix posterior;
  Timeline overlap_used;
  Assignment assignment;
};

/// Features -> init_q -> resegment -> assignment, with the overlap timeline
/// and the label source chosen by the ablation switches.
ResegmentOutcome run_resegmentation(const ResegmentInputs& inputs, const PipelineConfig& config,
                                    OverlapSource overlap_source, AssignSource assign_source);

}  // namespace ovl
