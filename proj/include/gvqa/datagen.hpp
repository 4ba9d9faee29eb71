#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "gvqa/dsl.hpp"
#include "gvqa/scene.hpp"

namespace gvqa {

// Parses a family selector: "all", "zero_hop" (every family whose programs
// contain no spatial relation), or a comma-separated list of family names.
// Throws std::invalid_argument on an unknown name.
std::set<Family> family_set(const std::string& spec);

struct DataGenConfig {
  uint64_t seed = 0;
  int train_scenes = 2000;
  int val_scenes = 400;
  int questions_per_scene = 10;
  int max_objects = 6;
  std::set<Family> families;      // empty = all seven
  std::string task = "standard";  // standard | ignore_red | group_cubes
  RenderOptions render;
};

struct SplitData {
  std::vector<Scene> scenes;
  std::vector<QuestionRecord> questions;
};

// Synthesizes one split ("train" or "val"). Scene seeds come from disjoint
// salt spaces under the corpus seed, so the splits never share a scene. The
// stored scenes are always the rendered (untransformed) worlds; for the
// non-canonical tasks the questions are generated against — and therefore
// labeled by — the transformed scene graph, and ignore_red additionally
// bans programs that mention red.
SplitData make_split(const DataGenConfig& cfg, const std::string& split);

// File names a corpus directory uses for a split.
std::string scenes_filename(const std::string& split);
std::string questions_filename(const std::string& split);

// Synthesizes both splits and writes them under out_dir (created if
// missing). Returns a human-readable summary, one line per split.
std::string write_corpus(const DataGenConfig& cfg, const std::string& out_dir);

}  // namespace gvqa
