#pragma once

// Attack generation: ghost-object injection under a spoofing budget, and the
// minimum-cost object invalidation attack against a shadow classifier.

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "shadowscope/classifier.hpp"
#include "shadowscope/core_model.hpp"
#include "shadowscope/lidar_sim.hpp"
#include "shadowscope/shadow_features.hpp"
#include "shadowscope/shadow_region.hpp"

namespace shadowscope {

struct SpooferBudget {
  std::size_t max_points = 200;  // B_A
  double max_wedge_deg = 10.0;
};

void validate(const SpooferBudget& budget);

/// Keeps the points whose azimuth lies within max_wedge_deg / 2 of
/// `target_center_angle` (closed), then, if more than max_points remain, a
/// uniform subsample of exactly max_points drawn with `seed`. Input order is
/// preserved.
PointCloud prune_trace(const PointCloud& trace, const SpooferBudget& budget,
                       double target_center_angle, std::uint64_t seed = 0);

struct GhostPlacement {
  double range = 6.0;  // meters from the sensor to the trace centroid (BEV)
  double angle = 0.0;  // radians
};

struct InjectionResult {
  Scene scene;
  std::optional<BoundingBox3D> ghost;
  std::size_t injected = 0;
  std::size_t removed = 0;
};

/// Moves the trace so its BEV centroid sits at the placement (rotating about
/// the sensor, then sliding along the placement ray, z unchanged), prunes it
/// to the budget, and merges it into the scene with strongest-return
/// semantics: at most one spoofed point per (laser, column) ray, and every
/// original point in a spoofed point's azimuth column at a larger radial
/// distance, or on the same ray, is removed. The ghost box is the tightest
/// rectangle around the spoofed points, labeled `label`. Points already in
/// the cloud are not added twice and are never removed, so repeating an
/// injection leaves the point set unchanged. Throws InvalidInputError when
/// the placement lies outside the sensor range.
InjectionResult inject_ghost(const Scene& scene, const PointCloud& trace,
                             const GhostPlacement& placement, const SpooferBudget& budget,
                             const ScannerSpec& scanner, ObjectClass label,
                             std::uint64_t seed = 0);

/// Minimum-area rectangle around the points' BEV hull, extents at least
/// `min_extent`, z range from the points.
BoundingBox3D tight_box(const PointCloud& points, ObjectClass label, double min_extent = 0.05);

/// F(rho_c, N_c): 1 when the features would be classified as a ghost shadow.
using ShadowDecision = std::function<int(double rho, std::size_t n_clusters)>;

ShadowDecision decision_of(const ClassifierModel& model);

struct InvalidationPlan {
  std::size_t n0 = 0;
  std::size_t n_p = 0;
  std::size_t n_clusters = 0;  // N_c target
  double rho = 0.0;            // rho_c target, (n0 + n_p) / N_c
  PointCloud original_points;  // where the n0 existing shadow points sit
  PointCloud injected_points;  // the n_p spoofed points
};

/// Smallest n_p <= B_A for which some N_c makes F((n0 + n_p) / N_c, N_c) = 1,
/// with the smallest such N_c as witness. Only N_c with (n0 + n_p) / N_c >=
/// min_pts are considered, because a DBSCAN cluster never holds fewer than
/// min_pts points. Returns nullopt when no plan fits the budget.
///
/// The plan is realized as N_c tight disks of near-equal size, ordered by
/// scoring weight from the start of the shadow center line; the first n0
/// slots are the original points. With a region the disks sit inside it at
/// ground level; without one they are laid out along +x from 5 m.
std::optional<InvalidationPlan> optimal_invalidation(
    std::size_t n0, const ShadowDecision& decision, const SpooferBudget& budget,
    const DbscanParams& dbscan, const std::optional<ShadowRegion>& region = std::nullopt);

std::optional<InvalidationPlan> optimal_invalidation(
    std::size_t n0, const ClassifierModel& model, const SpooferBudget& budget,
    const DbscanParams& dbscan, const std::optional<ShadowRegion>& region = std::nullopt);

struct MocPoint {
  std::size_t n_clusters = 0;
  double rho_max = 0.0;
};

/// Maximum operating curve: for N_c in 1..n_max, rho_max = (n0 + budget) / N_c.
std::vector<MocPoint> moc_points(std::size_t n0, std::size_t budget, std::size_t n_max);

}  // namespace shadowscope
