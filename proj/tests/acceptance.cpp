// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <functional>
#include <memory>
#include <sstream>
#include <string>

#include "oracles/oracles.hpp"
#include "shadowscope/adversary.hpp"
#include "shadowscope/anomaly_score.hpp"
#include "shadowscope/baseline_metrics.hpp"
#include "shadowscope/classifier.hpp"
#include "shadowscope/dataset.hpp"
#include "shadowscope/io.hpp"
#include "shadowscope/pipeline.hpp"
#include "shadowscope/random.hpp"
#include "shadowscope/shadow_features.hpp"
#include "shadowscope/shadow_region.hpp"

using namespace shadowscope;
namespace fs = std::filesystem;

namespace {

const fs::path kSource = SHADOWSCOPE_SOURCE_DIR;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Check {
  bool ok = true;
  std::ostringstream notes;
  void expect(bool cond, const std::string& what) {
    if (!cond && ok) notes << "first failure: " << what << "; ";
    ok = ok && cond;
  }
};

std::shared_ptr<const ClassifierModel> default_model() {
  static const auto model = std::make_shared<const ClassifierModel>(
      model_from_json(read_text_file(kSource / "models/default_svm_poly2.json")));
  return model;
}

std::vector<ShadowPointLocal> random_locals(Rng& rng, std::size_t n) {
  std::vector<ShadowPointLocal> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({uniform01(rng), uniform01(rng), i});
  return out;
}

Outcome scoring_math() {
  Check c;
  Rng rng(1);
  const ScoreParams unit;
  for (int i = 0; i < 10000; ++i) {
    ScoreParams p;
    p.alpha = std::exp(uniform_real(rng, -3, 4));
    const double s = score_region(random_locals(rng, 1 + uniform_index(rng, 50)), p).score;
    c.expect(s >= 0.0 && s <= 1.0, "score out of [0, 1]");
  }
  c.expect(score_region({}, unit).score == 0.0, "T = 0");
  c.expect(score_region({{1, 1, 0}}, unit).score == 0.0, "boundary point");
  c.expect(score_region({{0, 0, 0}}, unit).score == 1.0, "(0, 0) point");
  c.expect(std::abs(score_region({{0.5, 0, 0}}, unit).score - 0.60948) < 1e-5 &&
               std::abs(score_region({{0.5, 0, 0}}, unit).score -
                        (std::sqrt(0.5) - 0.25) / 0.75) < 1e-9,
           "(0.5, 0) point");
  for (int i = 0; i < 1000; ++i) {
    ScoreParams p;
    p.alpha = std::exp(uniform_real(rng, -2, 3));
    auto locals = random_locals(rng, 1 + uniform_index(rng, 30));
    const double before = score_region(locals, p).score;
    auto& v = locals[uniform_index(rng, locals.size())];
    (uniform_index(rng, 2) == 0 ? v.t : v.u) *= uniform01(rng);
    c.expect(score_region(locals, p).score >= before - 1e-15, "monotonicity");
  }
  return {c.ok, c.notes.str() + "10^4 bounds, 4 extremal cases, 10^3 monotonicity trials"};
}

Outcome dbscan_oracle() {
  Check c;
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 300);
    std::vector<Position> pts;
    const double spread = uniform_real(rng, 0.5, 3);
    for (std::size_t i = 0; i < n; ++i) {
      pts.push_back({uniform_real(rng, -spread, spread), uniform_real(rng, -spread, spread),
                     uniform_real(rng, -0.3, 0.3)});
    }
    const DbscanParams p{uniform_real(rng, 0.05, 0.5), 2 + uniform_index(rng, 7)};
    const auto got = dbscan(pts, p);
    const auto expected = oracle::dbscan({pts.begin(), pts.end()}, p.epsilon, p.min_pts);
    c.expect(oracle::same_partition(got, expected), "partition mismatch");
  }
  return {c.ok, c.notes.str() + "200 random sets"};
}

Outcome empty_shadows() {
  Check c;
  const DatasetParams params;
  std::size_t obstacles = 0;
  for (std::size_t i = 0; i < 50; ++i) {
    const auto s = generate_scene(params, mix_seed(3, i), scene_id_for(i));
    for (const auto& box : s.scene.boxes) {
      ++obstacles;
      for (const auto& mode : {HeightMode::ray_height(), HeightMode::uniform(0.2)}) {
        const auto region = propose_region(box, s.scene.geometry, mode);
        c.expect(collect_shadow_points(region, s.scene.cloud).empty(),
                 "points in a genuine shadow (" + to_string(mode) + ")");
      }
    }
  }
  return {c.ok, c.notes.str() + "50 scenes, " + std::to_string(obstacles) + " obstacles"};
}

Outcome end_to_end_detection() {
  Check c;
  const auto data = make_dataset(DatasetParams{}, 100, 4);
  const std::vector<double> thresholds{0.2};
  const std::vector<HeightMode> heights{HeightMode::uniform(0.2)};
  const auto r = sweep_thresholds(data, thresholds, heights, ScoreParams{});
  std::ostringstream d;
  for (const auto& row : r.rows) {
    if (row.object_class != "all") continue;
    d << "TPR " << row.tpr << " FPR " << row.fpr << " (" << row.positives << "+/"
      << row.negatives << "-)";
    c.expect(row.tpr >= 0.9, "TPR");
    c.expect(row.fpr <= 0.1, "FPR");
  }
  for (const auto& a : r.aucs) {
    if (a.object_class == "all") continue;
    d << ", AUC " << a.object_class << " " << (a.auc ? *a.auc : -1.0);
    c.expect(a.auc.has_value() && *a.auc >= 0.9, "AUC " + a.object_class);
  }
  c.expect(r.failed_objects == 0, "failed objects");
  return {c.ok, c.notes.str() + d.str()};
}

Outcome invalidation_optimizer() {
  Check c;
  Rng rng(5);
  const DbscanParams db{0.2, 6};
  std::size_t feasible = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n0 = uniform_index(rng, 40);
    const SpooferBudget budget{20 + uniform_index(rng, 181), 10.0};
    ShadowDecision f;
    if (trial % 2 == 0) {
      const std::size_t min_n = 1 + uniform_index(rng, 8);
      const double min_rho = uniform_real(rng, 0, 40);
      f = [=](double rho, std::size_t n) { return n >= min_n && rho >= min_rho ? 1 : 0; };
    } else {
      const std::uint64_t salt = rng();
      f = [=](double rho, std::size_t n) {
        return mix_seed(salt, n * 1000 + static_cast<std::uint64_t>(rho * 7)) % 23 == 0 ? 1 : 0;
      };
    }
    const auto got = optimal_invalidation(n0, f, budget, db);
    const auto expected = oracle::min_invalidation(n0, budget.max_points, db.min_pts, f);
    c.expect(got.has_value() == expected.has_value(), "feasibility");
    if (!got || !expected) continue;
    ++feasible;
    c.expect(got->n_p == expected->first, "minimal n_p");
    std::vector<Position> pos;
    for (const auto* part : {&got->original_points, &got->injected_points}) {
      for (const auto& p : *part) pos.push_back({p.x, p.y, p.z});
    }
    const auto feat = features_from_labels(dbscan(pos, db));
    c.expect(feat.n_clusters == got->n_clusters && feat.mean_cluster_density == got->rho,
             "re-extracted features");
  }
  return {c.ok, c.notes.str() + "100 stubs, " + std::to_string(feasible) + " feasible"};
}

Outcome robustness() {
  Check c;
  const auto model = default_model();
  const auto decide = decision_of(*model);
  const DbscanParams db{0.2, 6};
  std::ostringstream d;
  // Reach of each MOC from (0, 0): does any point on the curve classify as a ghost?
  for (std::size_t budget : {20u, 40u, 60u, 100u}) {
    bool reaches = false;
    for (const auto& m : moc_points(0, budget, 40)) {
      if (m.rho_max >= static_cast<double>(db.min_pts) && decide(m.rho_max, m.n_clusters) == 1) {
        reaches = true;
      }
    }
    d << "B=" << budget << (reaches ? " reaches" : " stays genuine") << "; ";
    c.expect(!reaches, "MOC for B=" + std::to_string(budget) + " reaches the ghost region");
  }
  const auto plan = optimal_invalidation(0, *model, SpooferBudget{5000, 10.0}, db);
  c.expect(plan.has_value(), "no finite evading budget");
  if (plan) {
    d << "min evading budget " << plan->n_p << " (N_c " << plan->n_clusters << ", rho "
      << plan->rho << ")";
    c.expect(plan->n_p > 100, "min evading budget <= 100");
  }
  return {c.ok, c.notes.str() + d.str()};
}

Outcome geometry_oracles() {
  Check c;
  Rng rng(7);
  for (int i = 0; i < 10000; ++i) {
    const double H = uniform_real(rng, 0.5, 4);
    const double h = uniform_real(rng, 0.01, 0.99) * H;
    const double dd = uniform_real(rng, 0.5, 60);
    const double want = oracle::shadow_length(h, H, dd);
    c.expect(std::abs(shadow_length(h, H, dd) - want) <= 1e-12 * std::max(1.0, want),
             "shadow length");
  }
  for (int i = 0; i < 100; ++i) {
    ShadowRegion r;
    const double half = uniform_real(rng, 0.01, 0.6);
    r.angle_min = -half;
    r.angle_max = half;
    r.d_start = uniform_real(rng, 3, 40);
    r.d_end = r.d_start + uniform_real(rng, 0.5, 35);
    const auto poly = make_polygon(region_polygon(r));
    const double want = oracle::annular_sector_area(2 * half, r.d_start, r.d_end);
    c.expect(std::abs(polygon_area(poly) - want) <= 1e-3 * want, "region polygon area");
  }
  const auto a = make_polygon({{0, 0}, {1, 0}, {1, 1}, {0, 1}});
  const auto b = make_polygon({{0.5, 0}, {1.5, 0}, {1.5, 1}, {0.5, 1}});
  c.expect(std::abs(polygon_iou(a, b) - 1.0 / 3.0) <= 1e-9, "IoU 1/3");
  const auto shape = make_polygon({{10, -1}, {22, -3}, {23, 0.5}, {21, 3.5}, {10, 1}});
  std::vector<Vec2> half_v;
  for (const auto& v : shape.vertices) half_v.push_back({0.5 * v.x, 0.5 * v.y});
  const auto same = procrustes(shape, shape);
  const auto scaled = procrustes(make_polygon(half_v), shape);
  c.expect(std::abs(same.similarity - 1) <= 1e-6 && std::abs(same.scale - 1) <= 1e-6,
           "Procrustes identical");
  c.expect(std::abs(scaled.similarity - 1) <= 1e-6 && std::abs(scaled.scale - 0.5) <= 1e-6,
           "Procrustes x0.5");
  return {c.ok, c.notes.str() + "shadow length, sector area, IoU, Procrustes"};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("'") + SHADOWSCOPE_CLI + "' " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome performance() {
  Check c;
  const auto data = make_dataset(DatasetParams{}, 40, 8);
  PipelineConfig config;
  config.model = default_model();
  std::vector<std::vector<Verdict>> verdicts;
  for (const auto& s : data) verdicts.push_back(analyze_scene(s.scene, config));
  std::ostringstream d;
  for (const auto& t : summarize_timings(data, verdicts)) {
    d << t.group << " " << t.mean.total_ms << " ms/object (max " << t.max_total_ms << "); ";
    c.expect(t.mean.total_ms <= (t.group == "genuine" ? 25.0 : 50.0), t.group + " mean time");
  }
  // The bench subcommand must emit per-stage timings.
  const auto dir = fs::temp_directory_path() / "shadowscope_acceptance_bench";
  fs::remove_all(dir);
  c.expect(run_cli("generate --scenes 4 --seed 3 --out '" + (dir / "gen").string() + "'") == 0,
           "generate");
  c.expect(run_cli("poison --scenes '" + (dir / "gen").string() + "' --out '" +
                   (dir / "pois").string() + "'") == 0,
           "poison");
  c.expect(run_cli("bench --scenes '" + (dir / "pois").string() + "' --model '" +
                   (kSource / "models/default_svm_poly2.json").string() + "' --out '" +
                   (dir / "bench").string() + "'") == 0,
           "bench");
  const auto header = read_text_file(dir / "bench/timing.csv");
  c.expect(header.find("generation_ms") != std::string::npos &&
               header.find("scoring_ms") != std::string::npos &&
               header.find("verification_ms") != std::string::npos,
           "bench stage columns");
  fs::remove_all(dir);
  return {c.ok, c.notes.str() + d.str() + "bench emits stage timings"};
}

Outcome determinism() {
  Check c;
  const auto a = make_dataset(DatasetParams{}, 12, 9, 1);
  const auto b = make_dataset(DatasetParams{}, 12, 9, 4);
  PipelineConfig config;
  config.model = default_model();
  std::string ja, jb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    c.expect(a[i].scene.cloud == b[i].scene.cloud, "scene differs across jobs");
    for (const auto& v : analyze_scene(a[i].scene, config, 1)) ja += verdict_to_json(v, a[i].scene.id);
    for (const auto& v : analyze_scene(b[i].scene, config, 4)) jb += verdict_to_json(v, b[i].scene.id);
  }
  c.expect(!ja.empty() && ja == jb, "verdicts differ across runs or jobs");
  const auto reloaded = model_from_json(model_to_json(*config.model));
  for (int i = 0; i < 100; ++i) {
    for (int j = 0; j < 100; ++j) {
      const FeatureVector x{0.5 * i, 0.4 * j};
      c.expect(margin(*config.model, x) == margin(reloaded, x), "persisted model differs");
    }
  }
  return {c.ok, c.notes.str() + "12 scenes, jobs 1 vs 4; 100x100 model grid"};
}

Outcome io_golden() {
  Check c;
  Rng rng(10);
  std::vector<std::byte> bytes;
  for (int i = 0; i < 4000; ++i) {
    for (int k = 0; k < 4; ++k) {
      const float f = static_cast<float>(k == 3 ? uniform01(rng) : uniform_real(rng, -80, 80));
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<std::byte>((bits >> (8 * b)) & 0xff));
    }
  }
  c.expect(serialize_velodyne_bin(parse_velodyne_bin(bytes)) == bytes, "velodyne round trip");
  const auto boxes =
      parse_labels(read_text_file(kSource / "tests/fixtures/native.labels"), LabelFrame::kLidar);
  c.expect(boxes.size() == 4, "fixture box count");
  if (boxes.size() == 4) {
    const auto& car = boxes[0];
    c.expect(car.label == ObjectClass::kCar && car.center_x == 4.0 && car.center_y == 0.0 &&
                 car.z_bottom == -1.7 && std::abs(car.z_top - 0.03) < 1e-12 &&
                 car.length == 2.0 && car.width == 1.0 && car.yaw == 0.0,
             "car fixture");
    c.expect(boxes[1].label == ObjectClass::kPedestrian && boxes[1].center_y == -3.25 &&
                 boxes[2].label == ObjectClass::kCyclist && boxes[3].label == ObjectClass::kOther,
             "fixture classes");
  }
  return {c.ok, c.notes.str() + "16000 floats bit-exact; native fixture"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"scoring math suite", scoring_math},
      {"DBSCAN oracle equivalence", dbscan_oracle},
      {"empty-shadow physical invariant", empty_shadows},
      {"end-to-end synthetic detection", end_to_end_detection},
      {"invalidation optimizer correctness", invalidation_optimizer},
      {"robustness (minimum evading budget)", robustness},
      {"geometry oracles", geometry_oracles},
      {"performance envelope", performance},
      {"determinism and persistence", determinism},
      {"I/O golden tests", io_golden},
  };
  const double limits_s[] = {5, 30, 1e9, 120, 60, 1e9, 1e9, 1e9, 1e9, 1e9};
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs > limits_s[i]) {
      o.pass = false;
      o.detail += "; over the runtime limit";
    }
    failures += o.pass ? 0 : 1;
    std::printf("criterion %zu %s: %s (%.2f s) %s\n", i + 1, criteria[i].first.c_str(),
                o.pass ? "PASS" : "FAIL", secs, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
