#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ovl/detector.h"
#include "ovl/timeline.h"

namespace ovl {

struct DetectionReport {
  double precision = 100.0;  // %
  double recall = 100.0;     // %
  double detected_duration = 0.0;
  double reference_duration = 0.0;
  double correct_duration = 0.0;
  bool zero_detection = false;  // precision defined as 100 when nothing is detected
};

/// Duration-based precision and recall of `hypothesis` against `reference`.
DetectionReport precision_recall(const Timeline& reference, const Timeline& hypothesis);

/// Sums durations of several reports before normalizing.
DetectionReport aggregate(std::span<const DetectionReport> reports);

struct DerReport {
  // Percentages of total reference speech.
  double der = 0.0;
  double false_alarm = 0.0;
  double missed_detection = 0.0;
  double confusion = 0.0;
  // Seconds.
  double total_reference_speech = 0.0;
  double false_alarm_time = 0.0;
  double missed_time = 0.0;
  double confusion_time = 0.0;
  double correct_time = 0.0;
  std::map<std::string, std::string> mapping;  // reference -> hypothesis
};

enum class MappingMethod { hungarian, brute_force };

/// Times are integrated exactly over event boundaries quantized to whole
/// microseconds. Speakers are paired one-to-one to maximize jointly active
/// time; at each instant with n_ref reference and n_hyp hypothesis speakers
/// and n_correct mapped pairs, miss = max(0, n_ref - n_hyp), false alarm =
/// max(0, n_hyp - n_ref), confusion = min(n_ref, n_hyp) - n_correct. A
/// positive collar excludes +-collar around every reference boundary.
/// Throws DataError("undefined DER") when no reference speech is scored.
DerReport der(const Annotation& reference, const Annotation& hypothesis, double collar = 0.0,
              MappingMethod method = MappingMethod::hungarian);

DerReport aggregate(std::span<const DerReport> reports);

/// Maximum-weight one-to-one assignment for a rows x cols weight matrix.
/// Returns, per row, the matched column or -1.
std::vector<int> max_weight_matching(const std::vector<std::vector<std::int64_t>>& weight);
/// Same by exhaustive search over permutations (small problems only).
std::vector<int> max_weight_matching_brute_force(
    const std::vector<std::vector<std::int64_t>>& weight);

struct ThresholdTuning {
  bool attainable = false;
  double threshold = 1.0;
  double precision = 0.0;  // %, frame-level on the development data
  double recall = 0.0;     // %
};

/// Sweeps theta over the sorted unique overlap scores and returns the smallest
/// one whose development precision (frames scoring > theta) reaches
/// `target_precision` percent; a theta that detects nothing counts as 100%
/// precision. Not attainable when the references contain no overlap.
ThresholdTuning tune_threshold(std::span<const ScoreSequence> scores,
                               std::span<const Timeline> references,
                               double target_precision = 90.0);

std::string to_json(const DerReport& report, const std::string& uri);
std::string to_json(const DetectionReport& report, const std::string& uri);

/// Aligned table with DER, FA, Miss and Conf columns.
void write_der_table(std::ostream& out,
                     std::span<const std::pair<std::string, DerReport>> rows);

}  // namespace ovl
