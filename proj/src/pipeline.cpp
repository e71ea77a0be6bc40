#include "shadowscope/pipeline.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>

#include <json.hpp>

#include "shadowscope/error.hpp"
#include "shadowscope/parallel.hpp"
#include "shadowscope/roc.hpp"

namespace shadowscope {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point from, Clock::time_point to) {
  return std::chrono::duration<double, std::milli>(to - from).count();
}

}  // namespace

void validate(const PipelineConfig& config) {
  validate(config.height_mode);
  validate(config.score);
  validate(config.dbscan);
  if (!config.model) throw ConfigError("pipeline needs a classifier model");
}

std::string_view to_string(VerdictClass c) {
  switch (c) {
    case VerdictClass::kGenuine:
      return "genuine";
    case VerdictClass::kGhostAttack:
      return "ghost-attack";
    case VerdictClass::kInvalidationAttack:
      return "invalidation-attack";
    case VerdictClass::kAnalysisFailed:
      return "analysis-failed";
  }
  return "analysis-failed";
}

Verdict analyze_object(const Scene& scene, const BoundingBox3D& box, const PipelineConfig& config,
                       std::size_t object_id) {
  Verdict v;
  v.object_id = object_id;
  v.label = box.label;
  const auto t0 = Clock::now();
  ShadowRegion region;
  try {
    region = propose_region(box, scene.geometry, config.height_mode);
  } catch (const Error& e) {
    v.verdict = VerdictClass::kAnalysisFailed;
    v.error = e.what();
    v.timings.generation_ms = elapsed_ms(t0, Clock::now());
    v.timings.total_ms = v.timings.generation_ms;
    return v;
  }
  const auto t1 = Clock::now();
  auto locals = collect_shadow_points(region, scene.cloud);
  v.score = score_region(locals, config.score);
  const auto t2 = Clock::now();
  if (is_anomalous(v.score, config.score)) {
    const ShadowFeatures f = extract_features(locals, scene.cloud, config.dbscan);
    const Prediction p = predict(*config.model, f);
    v.features = f;
    v.margin = p.margin;
    v.verdict = p.label == 1 ? VerdictClass::kGhostAttack : VerdictClass::kInvalidationAttack;
  }
  const auto t3 = Clock::now();
  v.timings.generation_ms = elapsed_ms(t0, t1);
  v.timings.scoring_ms = elapsed_ms(t1, t2);
  v.timings.verification_ms = elapsed_ms(t2, t3);
  v.timings.total_ms = elapsed_ms(t0, t3);
  return v;
}

std::vector<Verdict> analyze_scene(const Scene& scene, const PipelineConfig& config,
                                   unsigned jobs) {
  validate(config);
  std::vector<Verdict> out(scene.boxes.size());
  parallel_for(scene.boxes.size(), jobs, [&](std::size_t i) {
    out[i] = analyze_object(scene, scene.boxes[i], config, i);
  });
  return out;
}

std::string verdict_to_json(const Verdict& v, std::string_view scene_id, bool include_timings) {
  nlohmann::ordered_json j;
  j["scene_id"] = scene_id;
  j["object_id"] = v.object_id;
  j["label"] = to_string(v.label);
  j["verdict"] = to_string(v.verdict);
  j["T"] = v.score.point_count;
  j["score"] = v.score.score;
  if (v.features) {
    j["features"] = {{"n_clusters", v.features->n_clusters},
                     {"rho_c", v.features->mean_cluster_density}};
  } else {
    j["features"] = nullptr;
  }
  if (v.margin) {
    j["margin"] = *v.margin;
  } else {
    j["margin"] = nullptr;
  }
  if (!v.error.empty()) j["error"] = v.error;
  if (include_timings) {
    j["timings_ms"] = {{"generation", v.timings.generation_ms},
                       {"scoring", v.timings.scoring_ms},
                       {"verification", v.timings.verification_ms},
                       {"total", v.timings.total_ms}};
  }
  return j.dump();
}

SweepResult sweep_thresholds(const std::vector<LabeledScene>& dataset,
                             std::span<const double> thresholds,
                             std::span<const HeightMode> heights, const ScoreParams& score,
                             unsigned jobs) {
  validate(score);
  for (double t : thresholds) {
    if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("sweep thresholds must lie in [0, 1]");
  }
  struct Flat {
    std::size_t scene;
    std::size_t box;
  };
  std::vector<Flat> objects;
  for (std::size_t s = 0; s < dataset.size(); ++s) {
    if (dataset[s].ghost.size() != dataset[s].scene.boxes.size()) {
      throw InvalidInputError("scene " + dataset[s].scene.id + " lacks ground-truth labels");
    }
    for (std::size_t b = 0; b < dataset[s].scene.boxes.size(); ++b) objects.push_back({s, b});
  }

  SweepResult result;
  const std::vector<std::pair<std::string, std::optional<ObjectClass>>> groups = {
      {"car", ObjectClass::kCar},
      {"pedestrian", ObjectClass::kPedestrian},
      {"cyclist", ObjectClass::kCyclist},
      {"all", std::nullopt}};

  for (const auto& mode : heights) {
    validate(mode);
    std::vector<double> scores(objects.size());
    std::vector<char> failed(objects.size(), 0);
    parallel_for(objects.size(), jobs, [&](std::size_t i) {
      const auto& ls = dataset[objects[i].scene];
      try {
        const auto region = propose_region(ls.scene.boxes[objects[i].box], ls.scene.geometry, mode);
        scores[i] = score_region(collect_shadow_points(region, ls.scene.cloud), score).score;
      } catch (const DegenerateGeometryError&) {
        failed[i] = 1;
      }
    });
    std::size_t failures = 0;
    for (char f : failed) failures += static_cast<std::size_t>(f);
    result.failed_objects = std::max(result.failed_objects, failures);

    for (const auto& [name, cls] : groups) {
      std::vector<double> s;
      std::vector<int> y;
      for (std::size_t i = 0; i < objects.size(); ++i) {
        if (failed[i]) continue;
        const auto& ls = dataset[objects[i].scene];
        if (cls && ls.scene.boxes[objects[i].box].label != *cls) continue;
        s.push_back(scores[i]);
        y.push_back(ls.ghost[objects[i].box]);
      }
      std::size_t pos = 0;
      for (int v : y) pos += static_cast<std::size_t>(v);
      const std::size_t neg = y.size() - pos;
      for (double t : thresholds) {
        std::size_t tp = 0, fp = 0;
        for (std::size_t k = 0; k < s.size(); ++k) {
          if (s[k] >= t) (y[k] ? tp : fp)++;
        }
        SweepRow row;
        row.height_mode = to_string(mode);
        row.object_class = name;
        row.threshold = t;
        row.positives = pos;
        row.negatives = neg;
        row.tpr = pos ? static_cast<double>(tp) / static_cast<double>(pos) : 0.0;
        row.fpr = neg ? static_cast<double>(fp) / static_cast<double>(neg) : 0.0;
        row.accuracy = y.empty() ? 0.0
                                 : static_cast<double>(tp + (neg - fp)) /
                                       static_cast<double>(y.size());
        result.rows.push_back(row);
      }
      SweepAuc auc;
      auc.height_mode = to_string(mode);
      auc.object_class = name;
      auc.positives = pos;
      auc.negatives = neg;
      if (pos > 0 && neg > 0) auc.auc = roc_auc(s, y);
      result.aucs.push_back(auc);
    }
  }
  return result;
}

std::vector<TimingSummary> summarize_timings(const std::vector<LabeledScene>& dataset,
                                             const std::vector<std::vector<Verdict>>& verdicts) {
  if (dataset.size() != verdicts.size()) {
    throw InvalidInputError("timing summary: scene and verdict counts differ");
  }
  std::array<TimingSummary, 2> groups;
  groups[0].group = "genuine";
  groups[1].group = "attacked";
  for (std::size_t s = 0; s < dataset.size(); ++s) {
    for (std::size_t b = 0; b < verdicts[s].size(); ++b) {
      const auto& t = verdicts[s][b].timings;
      auto& g = groups[dataset[s].ghost.at(b) ? 1 : 0];
      ++g.objects;
      g.mean.generation_ms += t.generation_ms;
      g.mean.scoring_ms += t.scoring_ms;
      g.mean.verification_ms += t.verification_ms;
      g.mean.total_ms += t.total_ms;
      g.max_total_ms = std::max(g.max_total_ms, t.total_ms);
    }
  }
  std::vector<TimingSummary> out;
  for (auto& g : groups) {
    if (g.objects > 0) {
      const double n = static_cast<double>(g.objects);
      g.mean.generation_ms /= n;
      g.mean.scoring_ms /= n;
      g.mean.verification_ms /= n;
      g.mean.total_ms /= n;
    }
    out.push_back(g);
  }
  return out;
}

}  // namespace shadowscope
