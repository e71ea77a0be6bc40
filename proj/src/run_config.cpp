#include "shadowscope/run_config.hpp"

#include <cmath>
#include <functional>
#include <map>

#include <json.hpp>

#include "shadowscope/error.hpp"
#include "shadowscope/lidar_sim.hpp"

namespace shadowscope {

namespace {

using Json = nlohmann::json;
using Setters = std::map<std::string, std::function<void(const Json&)>>;

// Applies one setter per key of `object`; unknown keys are errors.
void read_object(const Json& object, const std::string& where, const Setters& setters) {
  if (!object.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : object.items()) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown config key '" + where + "." + key + "'");
    try {
      it->second(value);
    } catch (const Json::exception& e) {
      throw ConfigError("bad value for '" + where + "." + key + "': " + e.what());
    }
  }
}

template <typename T>
std::function<void(const Json&)> set(T& field) {
  return [&field](const Json& v) { field = v.get<T>(); };
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace

void validate(const RunConfig& c) {
  validate(c.dataset);
  validate(c.height_mode);
  validate(c.score);
  validate(c.dbscan);
  validate(c.training);
  const BoxNoise& n = c.box_noise;
  require(std::isfinite(n.center_sigma) && n.center_sigma >= 0.0,
          "box_noise.center_sigma must be non-negative");
  require(n.scale_range >= 0.0 && n.scale_range < 1.0, "box_noise.scale_range must lie in [0, 1)");
  require(std::isfinite(n.yaw_sigma_deg) && n.yaw_sigma_deg >= 0.0,
          "box_noise.yaw_sigma_deg must be non-negative");
  require(std::isfinite(n.top_sigma) && n.top_sigma >= 0.0,
          "box_noise.top_sigma must be non-negative");
  if (c.classifier.kind == ClassifierKind::kSvmPoly) {
    require(c.classifier.degree >= 1, "classifier polynomial degree must be at least 1");
  }
}

std::string run_config_to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["scanner"] = nlohmann::ordered_json::parse(scanner_to_json(c.dataset.scanner));
  j["height_mode"] = to_string(c.height_mode);
  j["alpha"] = c.score.alpha;
  j["threshold"] = c.score.threshold;
  j["dbscan_epsilon"] = c.dbscan.epsilon;
  j["dbscan_min_pts"] = c.dbscan.min_pts;
  j["classifier"] = to_string(c.classifier);
  j["model"] = c.model_path;
  const Hyperparams& h = c.training;
  j["training"] = {{"c", h.c},
                   {"gamma", h.gamma},
                   {"coef0", h.coef0},
                   {"tolerance", h.tolerance},
                   {"max_iterations", h.max_iterations},
                   {"c_grid", h.c_grid},
                   {"gamma_grid", h.gamma_grid},
                   {"cv_folds", h.cv_folds},
                   {"n_trees", h.n_trees},
                   {"max_depth", h.max_depth},
                   {"min_leaf", h.min_leaf}};
  const BoxNoise& n = c.box_noise;
  j["box_noise"] = {{"center_sigma", n.center_sigma},
                    {"scale_range", n.scale_range},
                    {"yaw_sigma_deg", n.yaw_sigma_deg},
                    {"top_sigma", n.top_sigma}};
  j["budget"] = {{"max_points", c.dataset.budget.max_points},
                 {"max_wedge_deg", c.dataset.budget.max_wedge_deg}};
  const LayoutParams& l = c.dataset.layout;
  j["layout"] = {{"min_obstacles", l.min_obstacles},
                 {"max_obstacles", l.max_obstacles},
                 {"min_distance", l.min_distance},
                 {"max_distance", l.max_distance},
                 {"half_fov_deg", l.half_fov_deg},
                 {"wedge_gap_deg", l.wedge_gap_deg}};
  const DatasetParams& d = c.dataset;
  j["attack"] = {{"attacked_fraction", d.attacked_fraction},
                 {"ghost_range_min", d.ghost_range_min},
                 {"ghost_range_max", d.ghost_range_max},
                 {"ghost_half_fov_deg", d.ghost_half_fov_deg},
                 {"trace_range_min", d.trace_range_min},
                 {"trace_range_max", d.trace_range_max}};
  j["seed"] = c.seed;
  return j.dump(2) + "\n";
}

RunConfig run_config_from_json(std::string_view text) {
  Json j = Json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config is not valid JSON");
  if (j.is_object() && j.contains("config") && j.contains("command")) j = j.at("config");

  RunConfig c;
  Hyperparams& h = c.training;
  BoxNoise& n = c.box_noise;
  LayoutParams& l = c.dataset.layout;
  DatasetParams& d = c.dataset;
  read_object(
      j, "config",
      {{"scanner", [&](const Json& v) { c.dataset.scanner = scanner_from_json(v.dump()); }},
       {"height_mode",
        [&](const Json& v) { c.height_mode = parse_height_mode(v.get<std::string>()); }},
       {"alpha", set(c.score.alpha)},
       {"threshold", set(c.score.threshold)},
       {"dbscan_epsilon", set(c.dbscan.epsilon)},
       {"dbscan_min_pts", set(c.dbscan.min_pts)},
       {"classifier",
        [&](const Json& v) { c.classifier = parse_classifier_spec(v.get<std::string>()); }},
       {"model", set(c.model_path)},
       {"training",
        [&](const Json& v) {
          read_object(v, "training",
                      {{"c", set(h.c)},
                       {"gamma", set(h.gamma)},
                       {"coef0", set(h.coef0)},
                       {"tolerance", set(h.tolerance)},
                       {"max_iterations", set(h.max_iterations)},
                       {"c_grid", set(h.c_grid)},
                       {"gamma_grid", set(h.gamma_grid)},
                       {"cv_folds", set(h.cv_folds)},
                       {"n_trees", set(h.n_trees)},
                       {"max_depth", set(h.max_depth)},
                       {"min_leaf", set(h.min_leaf)}});
        }},
       {"box_noise",
        [&](const Json& v) {
          read_object(v, "box_noise",
                      {{"center_sigma", set(n.center_sigma)},
                       {"scale_range", set(n.scale_range)},
                       {"yaw_sigma_deg", set(n.yaw_sigma_deg)},
                       {"top_sigma", set(n.top_sigma)}});
        }},
       {"budget",
        [&](const Json& v) {
          read_object(v, "budget",
                      {{"max_points", set(d.budget.max_points)},
                       {"max_wedge_deg", set(d.budget.max_wedge_deg)}});
        }},
       {"layout",
        [&](const Json& v) {
          read_object(v, "layout",
                      {{"min_obstacles", set(l.min_obstacles)},
                       {"max_obstacles", set(l.max_obstacles)},
                       {"min_distance", set(l.min_distance)},
                       {"max_distance", set(l.max_distance)},
                       {"half_fov_deg", set(l.half_fov_deg)},
                       {"wedge_gap_deg", set(l.wedge_gap_deg)}});
        }},
       {"attack",
        [&](const Json& v) {
          read_object(v, "attack",
                      {{"attacked_fraction", set(d.attacked_fraction)},
                       {"ghost_range_min", set(d.ghost_range_min)},
                       {"ghost_range_max", set(d.ghost_range_max)},
                       {"ghost_half_fov_deg", set(d.ghost_half_fov_deg)},
                       {"trace_range_min", set(d.trace_range_min)},
                       {"trace_range_max", set(d.trace_range_max)}});
        }},
       {"seed", set(c.seed)}});
  return c;
}

}  // namespace shadowscope
