#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "shadowscope/core_model.hpp"
#include "shadowscope/shadow_region.hpp"

namespace shadowscope {

struct DbscanParams {
  double epsilon = 0.2;    // meters
  std::size_t min_pts = 6;
};

void validate(const DbscanParams& params);

using Position = std::array<double, 3>;

inline constexpr int kNoise = -1;

/// Density-based clustering with Euclidean distance in 3D.
///
/// A point is core when at least min_pts points (itself included) lie within
/// epsilon, boundary inclusive. Clusters are the connected components of core
/// points under the epsilon relation. A non-core point with a core neighbor
/// joins the cluster of its lowest-index core neighbor; every other point is
/// noise. Cluster ids are 0..k-1, ordered by each cluster's smallest member
/// index, so the labeling is a pure function of the input sequence.
std::vector<int> dbscan(std::span<const Position> points, const DbscanParams& params);

struct ShadowFeatures {
  std::size_t n_clusters = 0;         // N_c
  double mean_cluster_density = 0.0;  // rho_c: clustered points per cluster

  friend bool operator==(const ShadowFeatures&, const ShadowFeatures&) = default;
};

/// Features of a labeling: cluster count and clustered points / clusters
/// (noise excluded, 0 when there are no clusters).
ShadowFeatures features_from_labels(std::span<const int> labels);

/// Clusters the shadow points' 3D positions, taken from `cloud` in ascending
/// source order.
ShadowFeatures extract_features(const std::vector<ShadowPointLocal>& locals,
                                const PointCloud& cloud, const DbscanParams& params);

}  // namespace shadowscope
