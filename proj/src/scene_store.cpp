#include "shadowscope/scene_store.hpp"

#include <algorithm>

#include <json.hpp>

#include "shadowscope/error.hpp"
#include "shadowscope/io.hpp"
#include "shadowscope/parallel.hpp"

namespace shadowscope {

namespace fs = std::filesystem;

std::string attack_sidecar_json(const StoredScene& scene) {
  nlohmann::ordered_json j;
  j["scene_id"] = scene.labeled.scene.id;
  j["ghost"] = scene.labeled.ghost;
  auto attacks = nlohmann::ordered_json::array();
  for (const auto& a : scene.attacks) {
    nlohmann::ordered_json r;
    r["object_id"] = a.object_id;
    r["class"] = to_string(a.ghost_class);
    r["range"] = a.placement.range;
    r["angle"] = a.placement.angle;
    r["injected"] = a.injected;
    r["removed"] = a.removed;
    r["seed"] = a.seed;
    attacks.push_back(std::move(r));
  }
  j["attacks"] = std::move(attacks);
  return j.dump(2) + "\n";
}

void parse_attack_sidecar(std::string_view text, StoredScene& scene) {
  const auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw MalformedInputError("attack sidecar is not a JSON object");
  }
  try {
    if (j.at("scene_id").get<std::string>() != scene.labeled.scene.id) {
      throw MalformedInputError("attack sidecar belongs to another scene");
    }
    std::vector<int> ghost;
    for (const auto& g : j.at("ghost")) {
      const int v = g.get<int>();
      if (v != 0 && v != 1) throw MalformedInputError("ghost flags must be 0 or 1");
      ghost.push_back(v);
    }
    if (ghost.size() != scene.labeled.scene.boxes.size()) {
      throw MalformedInputError("attack sidecar flags " + std::to_string(ghost.size()) +
                                " boxes, labels have " +
                                std::to_string(scene.labeled.scene.boxes.size()));
    }
    scene.labeled.ghost = std::move(ghost);
    scene.attacks.clear();
    if (j.contains("attacks")) {
      for (const auto& r : j.at("attacks")) {
        AttackRecord a;
        a.object_id = r.at("object_id").get<std::size_t>();
        a.ghost_class = parse_object_class(r.at("class").get<std::string>());
        a.placement.range = r.at("range").get<double>();
        a.placement.angle = r.at("angle").get<double>();
        a.injected = r.at("injected").get<std::size_t>();
        a.removed = r.at("removed").get<std::size_t>();
        a.seed = r.at("seed").get<std::uint64_t>();
        scene.attacks.push_back(a);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw MalformedInputError(std::string("attack sidecar: ") + e.what());
  }
}

void write_stored_scene(const fs::path& dir, const StoredScene& scene) {
  const std::string& id = scene.labeled.scene.id;
  write_file_bytes(dir / (id + ".bin"), serialize_velodyne_bin(scene.labeled.scene.cloud));
  write_text_file(dir / (id + ".labels"), format_labels(scene.labeled.scene.boxes));
  write_text_file(dir / (id + ".attack.json"), attack_sidecar_json(scene));
}

std::vector<std::string> list_scene_ids(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw InvalidInputError("scene directory " + dir.string() + " does not exist");
  }
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".bin") {
      ids.push_back(entry.path().stem().string());
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

StoredScene read_stored_scene(const fs::path& dir, const std::string& id,
                              const SensorGeometry& geometry) {
  StoredScene s;
  Scene& scene = s.labeled.scene;
  scene.id = id;
  scene.geometry = geometry;
  scene.cloud = parse_velodyne_bin(read_file_bytes(dir / (id + ".bin")));
  const fs::path labels = dir / (id + ".labels");
  if (fs::exists(labels)) scene.boxes = parse_labels(read_text_file(labels), LabelFrame::kLidar);
  s.labeled.ghost.assign(scene.boxes.size(), 0);
  const fs::path sidecar = dir / (id + ".attack.json");
  if (fs::exists(sidecar)) parse_attack_sidecar(read_text_file(sidecar), s);
  return s;
}

std::vector<StoredScene> read_scene_dir(const fs::path& dir, const SensorGeometry& geometry,
                                        unsigned jobs) {
  const auto ids = list_scene_ids(dir);
  std::vector<StoredScene> out(ids.size());
  parallel_for(ids.size(), jobs,
               [&](std::size_t i) { out[i] = read_stored_scene(dir, ids[i], geometry); });
  return out;
}

}  // namespace shadowscope
