#pragma once

// Per-object decision workflow: shadow region proposal, anomaly scoring and,
// for anomalous shadows only, feature extraction and attack classification.

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shadowscope/anomaly_score.hpp"
#include "shadowscope/classifier.hpp"
#include "shadowscope/core_model.hpp"
#include "shadowscope/shadow_features.hpp"
#include "shadowscope/shadow_region.hpp"

namespace shadowscope {

struct PipelineConfig {
  HeightMode height_mode = HeightMode::uniform(0.2);
  ScoreParams score;
  DbscanParams dbscan;
  std::shared_ptr<const ClassifierModel> model;
};

/// Checks every parameter; the classifier model is required.
void validate(const PipelineConfig& config);

enum class VerdictClass { kGenuine, kGhostAttack, kInvalidationAttack, kAnalysisFailed };

std::string_view to_string(VerdictClass c);

struct StageTimings {
  double generation_ms = 0.0;    // region proposal
  double scoring_ms = 0.0;       // point collection and scoring
  double verification_ms = 0.0;  // features and classification
  double total_ms = 0.0;
};

struct Verdict {
  std::size_t object_id = 0;
  ObjectClass label = ObjectClass::kOther;
  VerdictClass verdict = VerdictClass::kGenuine;
  ShadowScore score;
  std::optional<ShadowFeatures> features;  // set for ghost / invalidation verdicts
  std::optional<double> margin;
  std::string error;  // analysis-failed only
  StageTimings timings;
};

/// Never throws for bad geometry: degenerate boxes yield kAnalysisFailed.
Verdict analyze_object(const Scene& scene, const BoundingBox3D& box, const PipelineConfig& config,
                       std::size_t object_id = 0);

/// One verdict per box, in box order, whatever `jobs` is.
std::vector<Verdict> analyze_scene(const Scene& scene, const PipelineConfig& config,
                                   unsigned jobs = 1);

/// One JSON object on a single line (no trailing newline). Timings are left
/// out unless asked for, so verdict files are reproducible byte for byte.
std::string verdict_to_json(const Verdict& verdict, std::string_view scene_id,
                            bool include_timings = false);

// ---- evaluation ----------------------------------------------------------

struct LabeledScene {
  Scene scene;
  std::vector<int> ghost;  // per box: 1 for an injected ghost
};

struct SweepRow {
  std::string height_mode;
  std::string object_class;  // a class name or "all"
  double threshold = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
  double accuracy = 0.0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

struct SweepAuc {
  std::string height_mode;
  std::string object_class;
  std::optional<double> auc;  // absent when the class has one label only
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<SweepAuc> aucs;
  std::size_t failed_objects = 0;  // left out of every statistic
};

/// Anomaly-stage ROC per height mode and object class (car, pedestrian,
/// cyclist, all). Positives are injected ghosts, negatives genuine objects of
/// the same class; an object is flagged when its score reaches the threshold.
SweepResult sweep_thresholds(const std::vector<LabeledScene>& dataset,
                             std::span<const double> thresholds,
                             std::span<const HeightMode> heights, const ScoreParams& score,
                             unsigned jobs = 1);

struct TimingSummary {
  std::string group;  // "genuine" or "attacked"
  std::size_t objects = 0;
  StageTimings mean;
  double max_total_ms = 0.0;
};

/// Mean stage timings of genuine and attacked objects.
std::vector<TimingSummary> summarize_timings(const std::vector<LabeledScene>& dataset,
                                             const std::vector<std::vector<Verdict>>& verdicts);

}  // namespace shadowscope
