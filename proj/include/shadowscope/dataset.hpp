#pragma once

// Seeded synthetic datasets: simulated scenes, half of them carrying an
// injected ghost object, plus shadow feature sets for classifier training.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "shadowscope/adversary.hpp"
#include "shadowscope/classifier.hpp"
#include "shadowscope/lidar_sim.hpp"
#include "shadowscope/pipeline.hpp"
#include "shadowscope/random.hpp"

namespace shadowscope {

struct DatasetParams {
  ScannerSpec scanner;
  LayoutParams layout;
  SpooferBudget budget;
  double attacked_fraction = 0.5;
  double ghost_range_min = 5.0;
  double ghost_range_max = 8.0;
  double ghost_half_fov_deg = 30.0;
  double trace_range_min = 10.0;  // source obstacle distance for ghost traces
  double trace_range_max = 25.0;
};

void validate(const DatasetParams& params);

/// Points returned by a lone obstacle of class `cls` at a random distance in
/// [range_min, range_max] and random heading.
PointCloud make_trace(const ScannerSpec& scanner, ObjectClass cls, std::uint64_t seed,
                      double range_min, double range_max);

/// A simulated scene of randomly laid out genuine obstacles.
LabeledScene generate_scene(const DatasetParams& params, std::uint64_t seed,
                            const std::string& id);

struct AttackRecord {
  std::size_t object_id = 0;  // index of the ghost box
  ObjectClass ghost_class = ObjectClass::kCar;
  GhostPlacement placement;
  std::size_t injected = 0;
  std::size_t removed = 0;
  std::uint64_t seed = 0;
};

/// Injects a ghost of class `ghost_class` in front of the sensor, clear of the
/// genuine obstacles' wedges. Returns nothing (scene untouched) when no clear
/// placement is found or the pruned trace is empty.
std::optional<AttackRecord> attack_scene(LabeledScene& scene, const DatasetParams& params,
                                         std::uint64_t seed, ObjectClass ghost_class);

/// Applies a ghost trace at a fixed placement and records it as ground truth.
std::optional<AttackRecord> inject_trace(LabeledScene& scene, const PointCloud& trace,
                                         const GhostPlacement& placement,
                                         const SpooferBudget& budget,
                                         const ScannerSpec& scanner, ObjectClass ghost_class,
                                         std::uint64_t seed);

/// Whether scene `index` of a dataset is attacked: floor((i + 1) f) > floor(i f)
/// for the attacked fraction f.
bool is_attacked(std::size_t index, double fraction);

/// Ghost class of the k-th attacked scene: car, pedestrian, cyclist in turn.
ObjectClass ghost_class_for(std::size_t k);

/// "scene_00042" style identifiers.
std::string scene_id_for(std::size_t index);

/// generate_scene followed, for attacked indices, by attack_scene.
std::vector<LabeledScene> make_dataset(const DatasetParams& params, std::size_t n_scenes,
                                       std::uint64_t seed, unsigned jobs = 1);

/// Detection noise applied to boxes before feature extraction, standing in
/// for the imperfect boxes of a real detector.
struct BoxNoise {
  double center_sigma = 0.15;   // meters
  double scale_range = 0.15;    // length and width scale by U[1 - r, 1 + r]
  double yaw_sigma_deg = 3.0;
  double top_sigma = 0.05;      // meters
};

BoundingBox3D perturb_box(const BoundingBox3D& box, const BoxNoise& noise,
                          const SensorGeometry& geometry, Rng& rng);

struct FeatureRecord {
  std::string scene_id;
  std::size_t object_id = 0;
  ObjectClass object_class = ObjectClass::kOther;
  LabeledFeatures sample;
};

/// Shadow features of every box (label 1 for ghosts), with boxes perturbed by
/// `noise` drawn from `seed`. Boxes whose perturbed shadow is degenerate are
/// skipped.
std::vector<FeatureRecord> make_feature_records(const std::vector<LabeledScene>& scenes,
                                                const HeightMode& mode,
                                                const DbscanParams& dbscan,
                                                const BoxNoise& noise, std::uint64_t seed,
                                                unsigned jobs = 1);

}  // namespace shadowscope
