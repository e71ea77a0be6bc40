// shadowscope: ghost-object detection experiments from the command line.
//
// Exit status: 0 success, 1 usage or configuration error, 2 data error.

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "shadowscope/adversary.hpp"
#include "shadowscope/baseline_metrics.hpp"
#include "shadowscope/classifier.hpp"
#include "shadowscope/dataset.hpp"
#include "shadowscope/error.hpp"
#include "shadowscope/io.hpp"
#include "shadowscope/lidar_sim.hpp"
#include "shadowscope/parallel.hpp"
#include "shadowscope/pipeline.hpp"
#include "shadowscope/random.hpp"
#include "shadowscope/run_config.hpp"
#include "shadowscope/scene_store.hpp"

namespace fs = std::filesystem;
using namespace shadowscope;

namespace {

constexpr const char* kVersion = "0.1.0";
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr double kDeg = std::numbers::pi / 180.0;

// ---- configuration --------------------------------------------------------

struct CommonOptions {
  std::string config_path;
  std::string out;
  bool overwrite = false;
  unsigned jobs = 1;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> height_mode;
  std::optional<double> alpha;
  std::optional<double> threshold;
  std::optional<double> epsilon;
  std::optional<std::size_t> min_pts;
  std::optional<std::string> classifier;
  std::optional<std::string> model;
  std::optional<std::size_t> budget_points;
  std::optional<double> budget_wedge_deg;
  std::optional<double> sensor_height;
  std::optional<double> ground_z;
  std::optional<double> max_range;
};

void add_common_options(CLI::App* sub, CommonOptions& o, bool needs_out = true) {
  sub->add_option("--config", o.config_path, "JSON run config or an output manifest")
      ->check(CLI::ExistingFile);
  if (needs_out) {
    sub->add_option("--out", o.out, "output directory")->required();
    sub->add_flag("--overwrite", o.overwrite, "replace an existing output directory");
  }
  sub->add_option("--jobs", o.jobs, "worker threads")->check(CLI::Range(1u, 1024u));
  sub->add_option("--seed", o.seed, "master seed");
  sub->add_option("--height-mode", o.height_mode, "bev, ray-height or uniform:<m>");
  sub->add_option("--alpha", o.alpha, "score weighting exponent");
  sub->add_option("--threshold", o.threshold, "anomaly threshold in [0, 1]");
  sub->add_option("--epsilon", o.epsilon, "DBSCAN radius (m)");
  sub->add_option("--min-pts", o.min_pts, "DBSCAN core size");
  sub->add_option("--classifier", o.classifier, "classifier kind, e.g. svm-poly:2");
  sub->add_option("--model", o.model, "classifier model file");
  sub->add_option("--budget-points", o.budget_points, "spoofer point budget");
  sub->add_option("--budget-wedge-deg", o.budget_wedge_deg, "spoofer horizontal wedge");
  sub->add_option("--sensor-height", o.sensor_height, "sensor height above ground (m)");
  sub->add_option("--ground-z", o.ground_z, "ground plane z in the sensor frame");
  sub->add_option("--max-range", o.max_range, "sensor range (m)");
}

RunConfig resolve_config(const CommonOptions& o) {
  RunConfig c;
  if (!o.config_path.empty()) {
    std::string text;
    try {
      text = read_text_file(o.config_path);
    } catch (const Error& e) {
      throw ConfigError(std::string("cannot read config: ") + e.what());
    }
    c = run_config_from_json(text);
  }
  auto& g = c.dataset.scanner.geometry;
  if (o.seed) c.seed = *o.seed;
  if (o.height_mode) c.height_mode = parse_height_mode(*o.height_mode);
  if (o.alpha) c.score.alpha = *o.alpha;
  if (o.threshold) c.score.threshold = *o.threshold;
  if (o.epsilon) c.dbscan.epsilon = *o.epsilon;
  if (o.min_pts) c.dbscan.min_pts = *o.min_pts;
  if (o.classifier) c.classifier = parse_classifier_spec(*o.classifier);
  if (o.model) c.model_path = *o.model;
  if (o.budget_points) c.dataset.budget.max_points = *o.budget_points;
  if (o.budget_wedge_deg) c.dataset.budget.max_wedge_deg = *o.budget_wedge_deg;
  if (o.sensor_height) {
    g.sensor_height = *o.sensor_height;
    if (!o.ground_z) g.ground_z = -g.sensor_height;
  }
  if (o.ground_z) g.ground_z = *o.ground_z;
  if (o.max_range) g.max_range = *o.max_range;
  validate(c);
  return c;
}

std::shared_ptr<const ClassifierModel> load_model(const RunConfig& c) {
  if (c.model_path.empty()) throw ConfigError("a classifier model is required (--model)");
  if (!fs::exists(c.model_path)) throw ConfigError("model file " + c.model_path + " not found");
  return std::make_shared<const ClassifierModel>(model_from_json(read_text_file(c.model_path)));
}

// ---- staged output directories ---------------------------------------------

// Writes go to a hidden sibling directory that replaces `final` on commit and
// is removed if the command fails.
class OutputDir {
 public:
  OutputDir(const fs::path& final, bool overwrite) : final_(fs::absolute(final)) {
    if (fs::exists(final_)) {
      if (!fs::is_directory(final_)) throw ConfigError(final_.string() + " is not a directory");
      if (!fs::is_empty(final_) && !overwrite) {
        throw ConfigError("output directory " + final_.string() +
                          " is not empty (pass --overwrite to replace it)");
      }
    }
    staging_ = final_.parent_path() /
               ("." + final_.filename().string() + ".partial-" + std::to_string(::getpid()));
    fs::remove_all(staging_);
    fs::create_directories(staging_);
  }
  OutputDir(const OutputDir&) = delete;
  OutputDir& operator=(const OutputDir&) = delete;
  ~OutputDir() {
    if (!committed_) {
      std::error_code ec;
      fs::remove_all(staging_, ec);
    }
  }

  const fs::path& path() const { return staging_; }

  void commit() {
    if (fs::exists(final_)) fs::remove_all(final_);
    fs::rename(staging_, final_);
    committed_ = true;
  }

 private:
  fs::path final_;
  fs::path staging_;
  bool committed_ = false;
};

struct Invocation {
  std::string command;
  std::vector<std::string> argv;
};

void write_manifest(const fs::path& dir, const Invocation& inv, const RunConfig& config,
                    const nlohmann::ordered_json& inputs) {
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(e.path().filename().string());
  }
  std::sort(files.begin(), files.end());
  nlohmann::ordered_json m;
  m["tool"] = "shadowscope";
  m["version"] = kVersion;
  m["command"] = inv.command;
  m["argv"] = inv.argv;
  m["config"] = nlohmann::ordered_json::parse(run_config_to_json(config));
  m["seed"] = config.seed;
  m["inputs"] = inputs;
  m["outputs"] = files;
  write_text_file(dir / "manifest.json", m.dump(2) + "\n");
}

// ---- small helpers -----------------------------------------------------------

std::string fmt(double v) { return format_double(v); }

std::vector<double> parse_number_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  const auto colon = std::count(text.begin(), text.end(), ':');
  try {
    if (colon == 2) {
      const auto a = text.find(':');
      const auto b = text.find(':', a + 1);
      const double lo = std::stod(text.substr(0, a));
      const double hi = std::stod(text.substr(a + 1, b - a - 1));
      const double step = std::stod(text.substr(b + 1));
      if (!(step > 0.0) || !(hi >= lo)) throw ConfigError(what + ": range needs lo <= hi, step > 0");
      const auto n = static_cast<long long>(std::floor((hi - lo) / step + 1e-9));
      for (long long k = 0; k <= n; ++k) out.push_back(lo + static_cast<double>(k) * step);
      return out;
    }
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) out.push_back(std::stod(item));
    }
  } catch (const std::logic_error&) {
    throw ConfigError(what + ": cannot parse '" + text + "'");
  }
  if (out.empty()) throw ConfigError(what + " is empty");
  return out;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

nlohmann::ordered_json describe_input(const fs::path& p) {
  return fs::absolute(p).lexically_normal().string();
}

// ---- feature CSV ---------------------------------------------------------------

const char* kFeatureHeader = "scene_id,object_id,class,label,n_clusters,rho_c";

std::string format_feature_csv(const std::vector<FeatureRecord>& records) {
  std::string out = std::string(kFeatureHeader) + "\n";
  for (const auto& r : records) {
    out += r.scene_id + "," + std::to_string(r.object_id) + "," +
           std::string(to_string(r.object_class)) + "," + std::to_string(r.sample.label) + "," +
           std::to_string(r.sample.features.n_clusters) + "," +
           fmt(r.sample.features.mean_cluster_density) + "\n";
  }
  return out;
}

std::vector<FeatureRecord> parse_feature_csv(const std::string& text) {
  std::vector<FeatureRecord> out;
  std::stringstream ss(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line != kFeatureHeader) throw MalformedInputError("feature CSV header mismatch", 1);
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) throw MalformedInputError("feature CSV needs 6 columns", line_no);
    FeatureRecord r;
    try {
      r.scene_id = cells[0];
      r.object_id = std::stoull(cells[1]);
      r.object_class = parse_object_class(cells[2]);
      r.sample.label = std::stoi(cells[3]);
      r.sample.features.n_clusters = std::stoull(cells[4]);
      r.sample.features.mean_cluster_density = std::stod(cells[5]);
    } catch (const std::logic_error&) {
      throw MalformedInputError("feature CSV has a malformed number", line_no);
    } catch (const Error& e) {
      throw MalformedInputError(std::string("feature CSV: ") + e.what(), line_no);
    }
    if (r.sample.label != 0 && r.sample.label != 1) {
      throw MalformedInputError("feature labels must be 0 or 1", line_no);
    }
    if (!std::isfinite(r.sample.features.mean_cluster_density) ||
        r.sample.features.mean_cluster_density < 0.0) {
      throw MalformedInputError("rho_c must be finite and non-negative", line_no);
    }
    out.push_back(r);
  }
  if (line_no == 0) throw MalformedInputError("feature CSV is empty");
  return out;
}

std::vector<LabeledFeatures> samples_of(const std::vector<FeatureRecord>& records) {
  std::vector<LabeledFeatures> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.sample);
  return out;
}

std::vector<LabeledScene> labeled_of(std::vector<StoredScene>&& stored) {
  std::vector<LabeledScene> out;
  out.reserve(stored.size());
  for (auto& s : stored) out.push_back(std::move(s.labeled));
  return out;
}

std::vector<FeatureRecord> records_from_scenes(const fs::path& dir, const RunConfig& c,
                                               bool noisy, unsigned jobs) {
  const auto scenes = labeled_of(read_scene_dir(dir, c.geometry(), jobs));
  const BoxNoise noise = noisy ? c.box_noise : BoxNoise{0.0, 0.0, 0.0, 0.0};
  return make_feature_records(scenes, c.height_mode, c.dbscan, noise, c.seed, jobs);
}

std::string metrics_header() { return "group,n,accuracy,f1,tpr,fpr,auc"; }

std::string metrics_row(const std::string& group, const ClassifierMetrics& m) {
  return group + "," + std::to_string(m.n) + "," + fmt(m.accuracy) + "," + fmt(m.f1) + "," +
         fmt(m.tpr) + "," + fmt(m.fpr) + "," + (m.auc ? fmt(*m.auc) : std::string("")) + "\n";
}

// Metrics for each object class present and for the whole set.
std::string grouped_metrics(const std::string& prefix, const ClassifierModel& model,
                            const std::vector<FeatureRecord>& records) {
  std::string out;
  for (ObjectClass cls : {ObjectClass::kCar, ObjectClass::kPedestrian, ObjectClass::kCyclist,
                          ObjectClass::kOther}) {
    std::vector<LabeledFeatures> subset;
    for (const auto& r : records) {
      if (r.object_class == cls) subset.push_back(r.sample);
    }
    if (!subset.empty()) {
      out += metrics_row(prefix + std::string(to_string(cls)), evaluate(model, subset));
    }
  }
  out += metrics_row(prefix + "all", evaluate(model, samples_of(records)));
  return out;
}

// ---- subcommands -----------------------------------------------------------------

struct GenerateArgs {
  std::size_t scenes = 10;
};

int run_generate(const CommonOptions& o, const GenerateArgs& a, const Invocation& inv) {
  const RunConfig c = resolve_config(o);
  OutputDir out(o.out, o.overwrite);
  parallel_for(a.scenes, o.jobs, [&](std::size_t i) {
    StoredScene s;
    s.labeled = generate_scene(c.dataset, mix_seed(c.seed, i), scene_id_for(i));
    write_stored_scene(out.path(), s);
  });
  write_manifest(out.path(), inv, c, {{"scenes", a.scenes}});
  out.commit();
  return 0;
}

struct SceneInput {
  std::string scenes;
};

int run_poison(const CommonOptions& o, const SceneInput& in, const Invocation& inv) {
  const RunConfig c = resolve_config(o);
  const auto ids = list_scene_ids(in.scenes);
  std::vector<std::optional<ObjectClass>> ghost(ids.size());
  std::size_t count = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (is_attacked(i, c.dataset.attacked_fraction)) ghost[i] = ghost_class_for(count++);
  }
  OutputDir out(o.out, o.overwrite);
  parallel_for(ids.size(), o.jobs, [&](std::size_t i) {
    StoredScene s = read_stored_scene(in.scenes, ids[i], c.geometry());
    if (ghost[i]) {
      if (auto r = attack_scene(s.labeled, c.dataset, mix_seed(c.seed, i), *ghost[i])) {
        s.attacks.push_back(*r);
      }
    }
    write_stored_scene(out.path(), s);
  });
  write_manifest(out.path(), inv, c, {{"scenes", describe_input(in.scenes)}});
  out.commit();
  return 0;
}

struct InjectArgs {
  std::string scenes;
  std::string trace;
  std::string trace_class = "car";
  double range = 6.0;
  double angle_deg = 0.0;
  std::vector<std::string> only;
};

int run_inject(const CommonOptions& o, const InjectArgs& a, const Invocation& inv) {
  const RunConfig c = resolve_config(o);
  const ObjectClass cls = parse_object_class(a.trace_class);
  GhostPlacement placement{a.range, a.angle_deg * kDeg};
  if (!(placement.range > 0.0 && placement.range < c.geometry().max_range)) {
    throw ConfigError("placement range must lie inside the sensor range");
  }
  PointCloud trace;
  if (!a.trace.empty()) {
    trace = parse_velodyne_bin(read_file_bytes(a.trace));
  } else {
    trace = make_trace(c.dataset.scanner, cls, c.seed, c.dataset.trace_range_min,
                       c.dataset.trace_range_max);
  }
  const auto ids = list_scene_ids(a.scenes);
  for (const auto& id : a.only) {
    if (std::find(ids.begin(), ids.end(), id) == ids.end()) {
      throw InvalidInputError("scene " + id + " not found in " + a.scenes);
    }
  }
  OutputDir out(o.out, o.overwrite);
  parallel_for(ids.size(), o.jobs, [&](std::size_t i) {
    StoredScene s = read_stored_scene(a.scenes, ids[i], c.geometry());
    const bool selected =
        a.only.empty() || std::find(a.only.begin(), a.only.end(), ids[i]) != a.only.end();
    if (selected) {
      if (auto r = inject_trace(s.labeled, trace, placement, c.dataset.budget, c.dataset.scanner,
                                cls, mix_seed(c.seed, i))) {
        s.attacks.push_back(*r);
      }
    }
    write_stored_scene(out.path(), s);
  });
  nlohmann::ordered_json inputs;
  inputs["scenes"] = describe_input(a.scenes);
  inputs["trace"] = a.trace.empty() ? nlohmann::ordered_json("synthesized")
                                    : describe_input(a.trace);
  write_manifest(out.path(), inv, c, inputs);
  out.commit();
  return 0;
}

struct DetectArgs {
  std::string scenes;
  bool timings = false;
};

int run_detect(const CommonOptions& o, const DetectArgs& a, const Invocation& inv) {
  const RunConfig c = resolve_config(o);
  PipelineConfig pc{c.height_mode, c.score, c.dbscan, load_model(c)};
  validate(pc);
  const auto ids = list_scene_ids(a.scenes);
  OutputDir out(o.out, o.overwrite);
  parallel_for(ids.size(), o.jobs, [&](std::size_t i) {
    const StoredScene s = read_stored_scene(a.scenes, ids[i], c.geometry());
    std::string lines;
    for (const auto& v : analyze_scene(s.labeled.scene, pc, 1)) {
      lines += verdict_to_json(v, ids[i], a.timings) + "\n";
    }
    write_text_file(out.path() / (ids[i] + ".verdicts.jsonl"), lines);
  });
  write_manifest(out.path(), inv, c,
                 {{"scenes", describe_input(a.scenes)}, {"model", describe_input(c.model_path)}});
  out.commit();
  return 0;
}

struct FeatureArgs {
  std::string scenes;
  bool exact_boxes = false;
};

int run_features(const CommonOptions& o, const FeatureArgs& a, const Invocation& inv) {
  const RunConfig c = resolve_config(o);
  const auto records = records_from_scenes(a.scenes, c, !a.exact_boxes, o.jobs);
  OutputDir out(o.out, o.overwrite);
  write_text_file(out.path() / "features.csv", format_feature_csv(records));
  write_manifest(out.path(), inv, c, {{"scenes", describe_input(a.scenes)}});
  out.commit();
  return 0;
}

struct TrainArgs {
  std::string features;
  std::string scenes;
  bool exact_boxes = false;
};

std::vector<FeatureRecord> training_records(const TrainArgs& a, const RunConfig& c,
                                            unsigned jobs) {
  if (a.features.empty() == a.scenes.empty()) {
    throw ConfigError("give exactly one of --features or --scenes");
  }
  if (!a.features.empty()) return parse_feature_csv(read_text_file(a.features));
  return records_from_scenes(a.scenes, c, !a.exact_boxes, jobs);
}

int run_train(const CommonOptions& o, const TrainArgs& a, const Invocation& inv) {
  const RunConfig c = resolve_config(o);
  const auto records = training_records(a, c, o.jobs);
  const ClassifierModel model = train(samples_of(records), c.classifier, c.training, c.seed);
  OutputDir out(o.out, o.overwrite);
  write_text_file(out.path() / "model.json", model_to_json(model));
  write_text_file(out.path() / "train_metrics.csv",
                  metrics_header() + "\n" + grouped_metrics("", model, records));
  write_manifest(out.path(), inv, c,
                 {{"source", describe_input(a.features.empty() ? a.scenes : a.features)}});
  out.commit();
  return 0;
}

struct EvaluateArgs {
  std::string test_features;
  std::string test_scenes;
  std::string train_features;
  bool exact_boxes = false;
};

// Evaluates the configured model, or with --train-features trains and
// evaluates every classifier kind.
int run_evaluate(const CommonOptions& o, const EvaluateArgs& a, const Invocation& inv) {
  const RunConfig c = resolve_config(o);
  const auto test = training_records({a.test_features, a.test_scenes, a.exact_boxes}, c, o.jobs);
  std::string csv = "classifier," + metrics_header() + "\n";
  nlohmann::ordered_json inputs;
  inputs["test"] = describe_input(a.test_features.empty() ? a.test_scenes : a.test_features);
  auto add_rows = [&](const ClassifierModel& model) {
    std::stringstream rows(grouped_metrics("", model, test));
    std::string row;
    while (std::getline(rows, row)) csv += to_string(model.spec) + "," + row + "\n";
  };
  if (a.train_features.empty()) {
    const auto model = load_model(c);
    add_rows(*model);
    inputs["model"] = describe_input(c.model_path);
  } else {
    const auto train_set = samples_of(parse_feature_csv(read_text_file(a.train_features)));
    for (const auto& spec : all_classifier_specs()) add_rows(train(train_set, spec, c.training, c.seed));
    inputs["train"] = describe_input(a.train_features);
  }
  OutputDir out(o.out, o.overwrite);
  write_text_file(out.path() / "metrics.csv", csv);
  write_manifest(out.path(), inv, c, inputs);
  out.commit();
  return 0;
}

struct SweepArgs {
  std::string scenes;
  std::string thresholds = "0:1:0.05";
  std::string heights = "bev,ray-height,uniform:0.1,uniform:0.2,uniform:0.3,uniform:0.5";
};

int run_sweep(const CommonOptions& o, const SweepArgs& a, const Invocation& inv) {
  const RunConfig c = resolve_config(o);
  const auto thresholds = parse_number_list(a.thresholds, "thresholds");
  std::vector<HeightMode> heights;
  for (const auto& h : split(a.heights, ',')) heights.push_back(parse_height_mode(h));
  if (heights.empty()) throw ConfigError("no height modes given");
  const auto dataset = labeled_of(read_scene_dir(a.scenes, c.geometry(), o.jobs));
  const SweepResult r = sweep_thresholds(dataset, thresholds, heights, c.score, o.jobs);
  std::string roc = "height_mode,class,threshold,tpr,fpr,accuracy,positives,negatives\n";
  for (const auto& row : r.rows) {
    roc += row.height_mode + "," + row.object_class + "," + fmt(row.threshold) + "," +
           fmt(row.tpr) + "," + fmt(row.fpr) + "," + fmt(row.accuracy) + "," +
           std::to_string(row.positives) + "," + std::to_string(row.negatives) + "\n";
  }
  std::string auc = "height_mode,class,auc,positives,negatives\n";
  for (const auto& row : r.aucs) {
    auc += row.height_mode + "," + row.object_class + "," + (row.auc ? fmt(*row.auc) : "") + "," +
           std::to_string(row.positives) + "," + std::to_string(row.negatives) + "\n";
  }
  OutputDir out(o.out, o.overwrite);
  write_text_file(out.path() / "roc.csv", roc);
  write_text_file(out.path() / "auc.csv", auc);
  write_manifest(out.path(), inv, c,
                 {{"scenes", describe_input(a.scenes)}, {"failed_objects", r.failed_objects}});
  out.commit();
  return 0;
}

struct DensityArgs {
  std::string scenes;
  std::string mode = "env-2x2";
  std::string edges = "0:80:10";
};

int run_density(const CommonOptions& o, const DensityArgs& a, const Invocation& inv) {
  const RunConfig c = resolve_config(o);
  const DensityMode mode = parse_density_mode(a.mode);
  const auto edges = parse_number_list(a.edges, "edges");
  const auto ids = list_scene_ids(a.scenes);
  std::vector<std::vector<DensityBin>> per_scene(ids.size());
  parallel_for(ids.size(), o.jobs, [&](std::size_t i) {
    const StoredScene s = read_stored_scene(a.scenes, ids[i], c.geometry());
    per_scene[i] = density_profile(s.labeled.scene, mode, edges);
  });
  // Pool bins across scenes, weighting each scene's mean by its sample count.
  std::map<std::pair<double, double>, std::pair<double, std::size_t>> pooled;
  for (const auto& bins : per_scene) {
    for (const auto& b : bins) {
      auto& acc = pooled[{b.lo, b.hi}];
      acc.first += b.mean_count * static_cast<double>(b.samples);
      acc.second += b.samples;
    }
  }
  std::string csv = "lo,hi,mean_count,samples\n";
  for (const auto& [range, acc] : pooled) {
    csv += fmt(range.first) + "," + fmt(range.second) + "," +
           fmt(acc.first / static_cast<double>(acc.second)) + "," + std::to_string(acc.second) +
           "\n";
  }
  OutputDir out(o.out, o.overwrite);
  write_text_file(out.path() / "density.csv", csv);
  write_manifest(out.path(), inv, c, {{"scenes", describe_input(a.scenes)}});
  out.commit();
  return 0;
}

struct ShadowEvalArgs {
  std::string scenes;
  std::string annotations;
  std::size_t samples = 64;
};

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

int run_shadow_eval(const CommonOptions& o, const ShadowEvalArgs& a, const Invocation& inv) {
  const RunConfig c = resolve_config(o);
  const auto annotations = parse_annotations(read_text_file(a.annotations));
  std::map<std::string, StoredScene> scenes;
  for (const auto& an : annotations) {
    if (!scenes.count(an.scene_id)) {
      scenes[an.scene_id] = read_stored_scene(a.scenes, an.scene_id, c.geometry());
    }
  }
  std::string csv = "scene_id,object_id,iou,similarity,scale\n";
  std::vector<double> ious, sims, scales;
  for (const auto& an : annotations) {
    const Scene& scene = scenes.at(an.scene_id).labeled.scene;
    if (an.object_id >= scene.boxes.size()) {
      throw InvalidInputError("annotation for " + an.scene_id + " names missing object " +
                              std::to_string(an.object_id));
    }
    const auto region = propose_region(scene.boxes[an.object_id], scene.geometry, c.height_mode);
    const Polygon2D computed = make_polygon(region_polygon(region));
    const double iou = polygon_iou(an.polygon, computed);
    const ProcrustesResult p = procrustes(an.polygon, computed, a.samples);
    ious.push_back(iou);
    sims.push_back(p.similarity);
    scales.push_back(p.scale);
    csv += an.scene_id + "," + std::to_string(an.object_id) + "," + fmt(iou) + "," +
           fmt(p.similarity) + "," + fmt(p.scale) + "\n";
  }
  const std::string summary = "statistic,iou,similarity,scale\nmedian," + fmt(median(ious)) + "," +
                              fmt(median(sims)) + "," + fmt(median(scales)) + "\n";
  OutputDir out(o.out, o.overwrite);
  write_text_file(out.path() / "shadow_eval.csv", csv);
  write_text_file(out.path() / "shadow_eval_summary.csv", summary);
  write_manifest(out.path(), inv, c,
                 {{"scenes", describe_input(a.scenes)},
                  {"annotations", describe_input(a.annotations)}});
  out.commit();
  return 0;
}

int run_lpd(const CommonOptions& o, const SceneInput& in, const Invocation& inv) {
  const RunConfig c = resolve_config(o);
  const auto ids = list_scene_ids(in.scenes);
  std::vector<std::string> rows(ids.size());
  parallel_for(ids.size(), o.jobs, [&](std::size_t i) {
    const StoredScene s = read_stored_scene(in.scenes, ids[i], c.geometry());
    const Scene& scene = s.labeled.scene;
    for (std::size_t b = 0; b < scene.boxes.size(); ++b) {
      std::string ratio;
      try {
        ratio = fmt(lpd_ratio(scene, scene.boxes[b]));
      } catch (const DegenerateGeometryError&) {
        ratio = "";
      }
      rows[i] += ids[i] + "," + std::to_string(b) + "," +
                 std::string(to_string(scene.boxes[b].label)) + "," +
                 std::to_string(s.labeled.ghost[b]) + "," + ratio + "\n";
    }
  });
  std::string csv = "scene_id,object_id,class,ghost,lpd_ratio\n";
  for (const auto& r : rows) csv += r;
  OutputDir out(o.out, o.overwrite);
  write_text_file(out.path() / "lpd.csv", csv);
  write_manifest(out.path(), inv, c, {{"scenes", describe_input(in.scenes)}});
  out.commit();
  return 0;
}

struct MocArgs {
  std::size_t n0 = 0;
  std::string budgets = "20,40,60,100,200";
  std::size_t n_max = 40;
  std::size_t search_budget = 5000;
};

int run_moc(const CommonOptions& o, const MocArgs& a, const Invocation& inv) {
  const RunConfig c = resolve_config(o);
  const auto model = load_model(c);
  const auto budgets = parse_number_list(a.budgets, "budgets");
  std::string moc = "budget,n_clusters,rho_max,label,margin\n";
  std::string evasion = "budget,feasible,n_p,n_clusters,rho_c\n";
  auto evasion_row = [&](std::size_t budget) {
    SpooferBudget b = c.dataset.budget;
    b.max_points = budget;
    const auto plan = optimal_invalidation(a.n0, *model, b, c.dbscan);
    evasion += std::to_string(budget) + "," + (plan ? "1," : "0,");
    evasion += plan ? std::to_string(plan->n_p) + "," + std::to_string(plan->n_clusters) + "," +
                          fmt(plan->rho) + "\n"
                    : ",,\n";
  };
  for (double bd : budgets) {
    if (!(bd >= 0.0) || bd != std::floor(bd)) throw ConfigError("budgets must be whole numbers");
    const auto budget = static_cast<std::size_t>(bd);
    for (const auto& p : moc_points(a.n0, budget, a.n_max)) {
      const double m = margin(*model, {p.rho_max, static_cast<double>(p.n_clusters)});
      moc += std::to_string(budget) + "," + std::to_string(p.n_clusters) + "," + fmt(p.rho_max) +
             "," + (m >= 0.0 ? "1" : "0") + "," + fmt(m) + "\n";
    }
    if (budget >= 1) evasion_row(budget);
  }
  evasion_row(a.search_budget);
  OutputDir out(o.out, o.overwrite);
  write_text_file(out.path() / "moc.csv", moc);
  write_text_file(out.path() / "evasion.csv", evasion);
  write_manifest(out.path(), inv, c, {{"model", describe_input(c.model_path)}, {"n0", a.n0}});
  out.commit();
  return 0;
}

int run_bench(const CommonOptions& o, const SceneInput& in, const Invocation& inv) {
  const RunConfig c = resolve_config(o);
  PipelineConfig pc{c.height_mode, c.score, c.dbscan, load_model(c)};
  validate(pc);
  const auto ids = list_scene_ids(in.scenes);
  std::vector<LabeledScene> dataset(ids.size());
  std::vector<std::vector<Verdict>> verdicts(ids.size());
  // Scenes are timed one after another so stage timings are not inflated by
  // contention; --jobs only parallelizes loading.
  parallel_for(ids.size(), o.jobs, [&](std::size_t i) {
    dataset[i] = read_stored_scene(in.scenes, ids[i], c.geometry()).labeled;
  });
  std::string csv =
      "scene_id,object_id,class,ghost,verdict,generation_ms,scoring_ms,verification_ms,total_ms\n";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    verdicts[i] = analyze_scene(dataset[i].scene, pc, 1);
    for (const auto& v : verdicts[i]) {
      csv += ids[i] + "," + std::to_string(v.object_id) + "," + std::string(to_string(v.label)) +
             "," + std::to_string(dataset[i].ghost[v.object_id]) + "," +
             std::string(to_string(v.verdict)) + "," + fmt(v.timings.generation_ms) + "," +
             fmt(v.timings.scoring_ms) + "," + fmt(v.timings.verification_ms) + "," +
             fmt(v.timings.total_ms) + "\n";
    }
  }
  std::string summary =
      "group,objects,generation_ms,scoring_ms,verification_ms,total_ms,max_total_ms\n";
  for (const auto& t : summarize_timings(dataset, verdicts)) {
    summary += t.group + "," + std::to_string(t.objects) + "," + fmt(t.mean.generation_ms) + "," +
               fmt(t.mean.scoring_ms) + "," + fmt(t.mean.verification_ms) + "," +
               fmt(t.mean.total_ms) + "," + fmt(t.max_total_ms) + "\n";
  }
  OutputDir out(o.out, o.overwrite);
  write_text_file(out.path() / "timing.csv", csv);
  write_text_file(out.path() / "timing_summary.csv", summary);
  write_manifest(out.path(), inv, c, {{"scenes", describe_input(in.scenes)}});
  out.commit();
  return 0;
}

int run(std::vector<std::string> args);

// Re-runs the command recorded in a manifest, writing to a new directory.
int run_replay(const std::string& manifest_path, const std::string& out, bool overwrite) {
  const auto m = nlohmann::json::parse(read_text_file(manifest_path), nullptr, false);
  if (m.is_discarded() || !m.is_object() || !m.contains("argv")) {
    throw MalformedInputError("not a shadowscope manifest: " + manifest_path);
  }
  std::vector<std::string> args = m.at("argv").get<std::vector<std::string>>();
  bool replaced = false;
  for (std::size_t i = 0; i + 1 < args.size(); ++i) {
    if (args[i] == "--out") {
      args[i + 1] = out;
      replaced = true;
    }
  }
  if (!replaced) throw MalformedInputError("manifest argv lacks --out");
  if (overwrite && std::find(args.begin(), args.end(), "--overwrite") == args.end()) {
    args.push_back("--overwrite");
  }
  return run(args);
}

int run(std::vector<std::string> args) {
  CLI::App app{"Shadow-based ghost-object detection for LiDAR scenes", "shadowscope"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  CommonOptions common;
  Invocation inv;
  inv.argv = args;

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "simulate scenes of genuine obstacles");
  add_common_options(generate, common);
  generate->add_option("--scenes", gen.scenes, "number of scenes");

  SceneInput poison_in;
  auto* poison = app.add_subcommand("poison", "inject ghosts into a fraction of scenes");
  add_common_options(poison, common);
  poison->add_option("--scenes", poison_in.scenes, "input scene directory")->required();

  InjectArgs inj;
  auto* inject = app.add_subcommand("inject", "inject one ghost trace at a fixed placement");
  add_common_options(inject, common);
  inject->add_option("--scenes", inj.scenes, "input scene directory")->required();
  inject->add_option("--trace", inj.trace, "trace points (Velodyne binary); synthesized if omitted");
  inject->add_option("--class", inj.trace_class, "ghost label: car, pedestrian, cyclist");
  inject->add_option("--range", inj.range, "placement distance (m)");
  inject->add_option("--angle-deg", inj.angle_deg, "placement azimuth (degrees)");
  inject->add_option("--scene", inj.only, "only attack these scene ids");

  DetectArgs det;
  auto* detect = app.add_subcommand("detect", "write per-object verdicts as JSON lines");
  add_common_options(detect, common);
  detect->add_option("--scenes", det.scenes, "scene directory")->required();
  detect->add_flag("--timings", det.timings, "include stage timings (not reproducible)");

  FeatureArgs feat;
  auto* features = app.add_subcommand("features", "extract labeled shadow features");
  add_common_options(features, common);
  features->add_option("--scenes", feat.scenes, "scene directory")->required();
  features->add_flag("--exact-boxes", feat.exact_boxes, "skip box perturbation");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train a shadow classifier");
  add_common_options(train_cmd, common);
  train_cmd->add_option("--features", tr.features, "feature CSV");
  train_cmd->add_option("--scenes", tr.scenes, "scene directory to extract features from");
  train_cmd->add_flag("--exact-boxes", tr.exact_boxes, "skip box perturbation");

  EvaluateArgs ev;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "classifier metrics per object class");
  add_common_options(evaluate_cmd, common);
  evaluate_cmd->add_option("--features", ev.test_features, "test feature CSV");
  evaluate_cmd->add_option("--scenes", ev.test_scenes, "test scene directory");
  evaluate_cmd->add_option("--train-features", ev.train_features,
                           "train and compare every classifier kind on this CSV");
  evaluate_cmd->add_flag("--exact-boxes", ev.exact_boxes, "skip box perturbation");

  SweepArgs sw;
  auto* sweep = app.add_subcommand("sweep", "anomaly-stage ROC over thresholds and heights");
  add_common_options(sweep, common);
  sweep->add_option("--scenes", sw.scenes, "labeled scene directory")->required();
  sweep->add_option("--thresholds", sw.thresholds, "list a,b,c or range lo:hi:step");
  sweep->add_option("--heights", sw.heights, "comma-separated height modes");

  DensityArgs den;
  auto* density = app.add_subcommand("density", "point density by distance");
  add_common_options(density, common);
  density->add_option("--scenes", den.scenes, "scene directory")->required();
  density->add_option("--mode", den.mode, "env-2x2 or bbox");
  density->add_option("--edges", den.edges, "bin edges: list or lo:hi:step");

  ShadowEvalArgs se;
  auto* shadow_eval = app.add_subcommand("shadow-eval", "compare shadows with annotated outlines");
  add_common_options(shadow_eval, common);
  shadow_eval->add_option("--scenes", se.scenes, "scene directory")->required();
  shadow_eval->add_option("--annotations", se.annotations, "annotation JSON")
      ->required()
      ->check(CLI::ExistingFile);
  shadow_eval->add_option("--samples", se.samples, "boundary resampling count")
      ->check(CLI::Range(3, 100000));

  SceneInput lpd_in;
  auto* lpd = app.add_subcommand("lpd", "frustum point-ratio baseline");
  add_common_options(lpd, common);
  lpd->add_option("--scenes", lpd_in.scenes, "scene directory")->required();

  MocArgs mc;
  auto* moc = app.add_subcommand("moc", "maximum operating curves and evasion budgets");
  add_common_options(moc, common);
  moc->add_option("--n0", mc.n0, "points already in the shadow");
  moc->add_option("--budgets", mc.budgets, "point budgets");
  moc->add_option("--n-max", mc.n_max, "largest cluster count on each curve")
      ->check(CLI::Range(1, 100000));
  moc->add_option("--search-budget", mc.search_budget, "budget for the evasion search")
      ->check(CLI::Range(1, 1000000));

  SceneInput bench_in;
  auto* bench = app.add_subcommand("bench", "per-stage timing of the pipeline");
  add_common_options(bench, common);
  bench->add_option("--scenes", bench_in.scenes, "labeled scene directory")->required();

  std::string replay_manifest;
  std::string replay_out;
  bool replay_overwrite = false;
  auto* replay = app.add_subcommand("replay", "re-run the command recorded in a manifest");
  replay->add_option("manifest", replay_manifest, "manifest.json")
      ->required()
      ->check(CLI::ExistingFile);
  replay->add_option("--out", replay_out, "output directory")->required();
  replay->add_flag("--overwrite", replay_overwrite, "replace an existing output directory");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  inv.command = sub->get_name();
  if (sub == generate) return run_generate(common, gen, inv);
  if (sub == poison) return run_poison(common, poison_in, inv);
  if (sub == inject) return run_inject(common, inj, inv);
  if (sub == detect) return run_detect(common, det, inv);
  if (sub == features) return run_features(common, feat, inv);
  if (sub == train_cmd) return run_train(common, tr, inv);
  if (sub == evaluate_cmd) return run_evaluate(common, ev, inv);
  if (sub == sweep) return run_sweep(common, sw, inv);
  if (sub == density) return run_density(common, den, inv);
  if (sub == shadow_eval) return run_shadow_eval(common, se, inv);
  if (sub == lpd) return run_lpd(common, lpd_in, inv);
  if (sub == moc) return run_moc(common, mc, inv);
  if (sub == bench) return run_bench(common, bench_in, inv);
  if (sub == replay) return run_replay(replay_manifest, replay_out, replay_overwrite);
  return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    return run(args);
  } catch (const ConfigError& e) {
    std::cerr << "shadowscope: configuration error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "shadowscope: " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "shadowscope: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "shadowscope: unexpected error: " << e.what() << "\n";
    return kExitData;
  }
}
