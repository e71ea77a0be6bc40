#pragma once

// Genuine-shadow verification.
//
// Each shadow point gets two exponentially decaying weights,
//   w_start = exp(ln(0.5)/alpha * t),   w_mid = exp(ln(0.5)/alpha * u),
// so a point on the start line / center line weighs 1 and a point on the end
// line / boundary weighs w_min = 0.5^(1/alpha). The region score
//   (sum_i w_start,i * w_mid,i - T * w_min^2) / (T * (1 - w_min^2))
// lies in [0, 1]; an empty region scores 0.

#include <utility>
#include <vector>

#include "shadowscope/shadow_region.hpp"

namespace shadowscope {

struct ScoreParams {
  double alpha = 1.0;
  double threshold = 0.2;

  double w_min() const;
};

void validate(const ScoreParams& params);

struct PointWeight {
  double w_start = 1.0;
  double w_mid = 1.0;

  friend bool operator==(const PointWeight&, const PointWeight&) = default;
};

struct ShadowScore {
  double score = 0.0;
  std::size_t point_count = 0;  // T
  std::vector<PointWeight> per_point_weights;  // ordered by source index
};

PointWeight point_weight(const ShadowPointLocal& local, const ScoreParams& params);

/// Order-independent: points are summed in ascending source index.
ShadowScore score_region(std::vector<ShadowPointLocal> locals, const ScoreParams& params);

/// Closed at the threshold: a score equal to the threshold is anomalous.
inline bool is_anomalous(const ShadowScore& score, const ScoreParams& params) {
  return score.score >= params.threshold;
}

}  // namespace shadowscope
