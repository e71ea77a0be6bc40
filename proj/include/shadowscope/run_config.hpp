#pragma once

// Every tunable of a run in one JSON document. Missing keys keep their
// defaults, unknown keys are rejected, and the resolved document is echoed
// into each output manifest.

#include <cstdint>
#include <string>
#include <string_view>

#include "shadowscope/anomaly_score.hpp"
#include "shadowscope/classifier.hpp"
#include "shadowscope/dataset.hpp"
#include "shadowscope/shadow_features.hpp"
#include "shadowscope/shadow_region.hpp"

namespace shadowscope {

struct RunConfig {
  DatasetParams dataset;  // scanner (sensor geometry), layout, budget, attack bands
  HeightMode height_mode = HeightMode::uniform(0.2);
  ScoreParams score;
  DbscanParams dbscan;
  ClassifierSpec classifier;
  std::string model_path;  // classifier model file for detection
  Hyperparams training;
  BoxNoise box_noise;
  std::uint64_t seed = 1;

  const SensorGeometry& geometry() const { return dataset.scanner.geometry; }
};

/// Throws ConfigError naming the offending field.
void validate(const RunConfig& config);

std::string run_config_to_json(const RunConfig& config);

/// Accepts a config document or an output manifest (its "config" member).
/// Does not validate; call validate after applying overrides.
RunConfig run_config_from_json(std::string_view text);

}  // namespace shadowscope
