#pragma once

// Scene directories: <id>.bin (Velodyne binary), <id>.labels (native boxes)
// and <id>.attack.json (ground-truth ghost flags and attack records).

#include <filesystem>
#include <string>
#include <vector>

#include "shadowscope/dataset.hpp"

namespace shadowscope {

struct StoredScene {
  LabeledScene labeled;
  std::vector<AttackRecord> attacks;
};

std::string attack_sidecar_json(const StoredScene& scene);
/// Fills ghost flags and attack records; `scene_id` must match.
void parse_attack_sidecar(std::string_view text, StoredScene& scene);

void write_stored_scene(const std::filesystem::path& dir, const StoredScene& scene);

/// Ids of every <id>.bin in `dir`, sorted.
std::vector<std::string> list_scene_ids(const std::filesystem::path& dir);

/// Missing labels mean no boxes; a missing sidecar means no ghosts.
StoredScene read_stored_scene(const std::filesystem::path& dir, const std::string& id,
                              const SensorGeometry& geometry);

std::vector<StoredScene> read_scene_dir(const std::filesystem::path& dir,
                                        const SensorGeometry& geometry, unsigned jobs = 1);

}  // namespace shadowscope
