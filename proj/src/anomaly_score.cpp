#include "shadowscope/anomaly_score.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "shadowscope/error.hpp"

namespace shadowscope {

namespace {

double decay_rate(const ScoreParams& params) { return -std::numbers::ln2 / params.alpha; }

}  // namespace

double ScoreParams::w_min() const { return std::exp(decay_rate(*this)); }

void validate(const ScoreParams& params) {
  if (!std::isfinite(params.alpha) || params.alpha <= 0.0) {
    throw ConfigError("alpha must be positive and finite");
  }
  if (!(params.w_min() < 1.0) || !(params.w_min() > 0.0)) {
    throw ConfigError("alpha is too extreme: w_min must lie strictly inside (0, 1)");
  }
  if (!(params.threshold >= 0.0 && params.threshold <= 1.0)) {
    throw ConfigError("anomaly threshold must lie in [0, 1]");
  }
}

PointWeight point_weight(const ShadowPointLocal& local, const ScoreParams& params) {
  const double k = decay_rate(params);
  return {std::exp(k * local.t), std::exp(k * local.u)};
}

ShadowScore score_region(std::vector<ShadowPointLocal> locals, const ScoreParams& params) {
  validate(params);
  std::sort(locals.begin(), locals.end(),
            [](const auto& a, const auto& b) { return a.source < b.source; });
  ShadowScore out;
  out.point_count = locals.size();
  if (locals.empty()) return out;

  const double w_min = params.w_min();
  const double floor = w_min * w_min;
  const double span = 1.0 - floor;
  out.per_point_weights.reserve(locals.size());
  // Averaging per-point normalized terms is the same quantity as the ratio of
  // sums, but each term is provably in [0, 1] under rounding, so the mean is
  // too and boundary-only regions score exactly 0.
  double sum = 0.0;
  for (const auto& local : locals) {
    const PointWeight w = point_weight(local, params);
    out.per_point_weights.push_back(w);
    sum += (w.w_start * w.w_mid - floor) / span;
  }
  out.score = sum / static_cast<double>(locals.size());
  return out;
}

}  // namespace shadowscope
