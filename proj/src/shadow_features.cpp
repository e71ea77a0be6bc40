#include "shadowscope/shadow_features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <unordered_map>

#include "shadowscope/error.hpp"

namespace shadowscope {

namespace {

struct CellKey {
  std::int64_t x, y, z;
  friend bool operator==(const CellKey&, const CellKey&) = default;
};

struct CellHash {
  std::size_t operator()(const CellKey& k) const {
    std::uint64_t h = static_cast<std::uint64_t>(k.x) * 0x9e3779b97f4a7c15ULL;
    h ^= static_cast<std::uint64_t>(k.y) * 0xc2b2ae3d27d4eb4fULL + (h << 6) + (h >> 2);
    h ^= static_cast<std::uint64_t>(k.z) * 0x165667b19e3779f9ULL + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

// Uniform grid with cell edge epsilon: all epsilon-neighbors of a point lie in
// the 27 cells around its own.
class NeighborGrid {
 public:
  NeighborGrid(std::span<const Position> points, double epsilon)
      : points_(points), epsilon_(epsilon), eps2_(epsilon * epsilon) {
    for (std::size_t i = 0; i < points.size(); ++i) cells_[key(points[i])].push_back(i);
  }

  template <typename Visit>
  void for_each_neighbor(std::size_t i, Visit&& visit) const {
    const CellKey k = key(points_[i]);
    const Position& p = points_[i];
    for (std::int64_t dx = -1; dx <= 1; ++dx) {
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        for (std::int64_t dz = -1; dz <= 1; ++dz) {
          auto it = cells_.find({k.x + dx, k.y + dy, k.z + dz});
          if (it == cells_.end()) continue;
          for (std::size_t j : it->second) {
            const Position& q = points_[j];
            const double d2 = (p[0] - q[0]) * (p[0] - q[0]) + (p[1] - q[1]) * (p[1] - q[1]) +
                              (p[2] - q[2]) * (p[2] - q[2]);
            if (d2 <= eps2_) visit(j);
          }
        }
      }
    }
  }

 private:
  CellKey key(const Position& p) const {
    return {static_cast<std::int64_t>(std::floor(p[0] / epsilon_)),
            static_cast<std::int64_t>(std::floor(p[1] / epsilon_)),
            static_cast<std::int64_t>(std::floor(p[2] / epsilon_))};
  }

  std::span<const Position> points_;
  double epsilon_;
  double eps2_;
  std::unordered_map<CellKey, std::vector<std::size_t>, CellHash> cells_;
};

}  // namespace

void validate(const DbscanParams& params) {
  if (!std::isfinite(params.epsilon) || params.epsilon <= 0.0) {
    throw ConfigError("DBSCAN epsilon must be positive");
  }
  if (params.min_pts < 1) throw ConfigError("DBSCAN min_pts must be at least 1");
}

std::vector<int> dbscan(std::span<const Position> points, const DbscanParams& params) {
  validate(params);
  const std::size_t n = points.size();
  std::vector<int> labels(n, kNoise);
  if (n == 0) return labels;

  NeighborGrid grid(points, params.epsilon);
  std::vector<char> core(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t count = 0;
    grid.for_each_neighbor(i, [&](std::size_t) { ++count; });
    core[i] = count >= params.min_pts ? 1 : 0;
  }

  // Expand core components in index order; ids come out ordered by the
  // smallest core index of each component.
  int next_id = 0;
  std::vector<std::size_t> stack;
  for (std::size_t seed = 0; seed < n; ++seed) {
    if (!core[seed] || labels[seed] != kNoise) continue;
    labels[seed] = next_id;
    stack.assign(1, seed);
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      grid.for_each_neighbor(i, [&](std::size_t j) {
        if (core[j] && labels[j] == kNoise) {
          labels[j] = next_id;
          stack.push_back(j);
        }
      });
    }
    ++next_id;
  }

  // Border points follow their lowest-index core neighbor.
  for (std::size_t i = 0; i < n; ++i) {
    if (core[i]) continue;
    std::size_t best = n;
    grid.for_each_neighbor(i, [&](std::size_t j) {
      if (core[j] && j < best) best = j;
    });
    if (best < n) labels[i] = labels[best];
  }

  // A border point can carry a smaller index than every core point of its
  // cluster, so renumber by smallest member index.
  std::vector<int> remap(static_cast<std::size_t>(next_id), -1);
  int canonical = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] == kNoise) continue;
    auto& slot = remap[static_cast<std::size_t>(labels[i])];
    if (slot < 0) slot = canonical++;
  }
  for (auto& l : labels) {
    if (l != kNoise) l = remap[static_cast<std::size_t>(l)];
  }
  return labels;
}

ShadowFeatures features_from_labels(std::span<const int> labels) {
  int max_label = -1;
  std::size_t clustered = 0;
  for (int l : labels) {
    if (l == kNoise) continue;
    ++clustered;
    max_label = std::max(max_label, l);
  }
  ShadowFeatures f;
  f.n_clusters = static_cast<std::size_t>(max_label + 1);
  f.mean_cluster_density =
      f.n_clusters == 0 ? 0.0 : static_cast<double>(clustered) / static_cast<double>(f.n_clusters);
  return f;
}

ShadowFeatures extract_features(const std::vector<ShadowPointLocal>& locals,
                                const PointCloud& cloud, const DbscanParams& params) {
  std::vector<std::size_t> sources;
  sources.reserve(locals.size());
  for (const auto& l : locals) {
    if (l.source >= cloud.size()) throw InvalidInputError("shadow point index outside the cloud");
    sources.push_back(l.source);
  }
  std::sort(sources.begin(), sources.end());
  std::vector<Position> positions;
  positions.reserve(sources.size());
  for (std::size_t s : sources) positions.push_back({cloud[s].x, cloud[s].y, cloud[s].z});
  const auto labels = dbscan(positions, params);
  return features_from_labels(labels);
}

}  // namespace shadowscope
