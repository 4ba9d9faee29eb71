#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "gvqa/tensor.hpp"

namespace gvqa {

// ----- attribute / relation inventory -----

inline constexpr int kNumAttrs = 4;

enum class Attr : int { Color = 0, Shape = 1, Size = 2, Material = 3 };

const std::vector<std::string>& attr_names();
const std::vector<std::string>& attr_values(Attr a);
int attr_value_count(Attr a);
std::string attr_name(Attr a);
std::string value_name(Attr a, int v);
// Both return negative on unknown names.
int attr_from_name(const std::string& name);
int value_from_name(Attr a, const std::string& name);

// Flat index of an (attribute, value) pair across the full inventory
// (colors first, then shapes, sizes, materials); 15 entries total.
int value_flat_index(Attr a, int v);
int total_attr_values();

enum class Rel : int { Left = 0, Right = 1, Front = 2, Behind = 3 };
inline constexpr int kNumRels = 4;
std::string rel_name(Rel r);
int rel_from_name(const std::string& name);
Rel rel_converse(Rel r);

// ----- world model -----

struct SceneObject {
  int id = 0;
  int x = 0;  // column, in [0, w)
  int y = 0;  // row, in [0, l)
  std::array<int, kNumAttrs> attrs{};  // value index per attribute

  int value(Attr a) const { return attrs[static_cast<size_t>(a)]; }
};

struct Scene {
  int id = 0;
  uint64_t seed = 0;
  std::vector<SceneObject> objects;
};

// Ground-truth symbolic world state. Attribute values are optional because
// the cube-grouping transform leaves disagreeing attributes undefined.
struct SceneGraph {
  std::map<int, std::array<std::optional<int>, kNumAttrs>> attributes;
  std::array<std::set<std::pair<int, int>>, kNumRels> relations;  // (i,j): "i rel j"

  std::vector<int> ids() const;
  bool operator==(const SceneGraph&) const = default;
};

struct RenderOptions {
  int l = 32;                // rows
  int w = 32;                // columns
  int sig_channels = 14;     // attribute-signature channels
  uint64_t signature_seed = 20240613;
  double blob_std = 1.5;
  double noise_std = 0.02;

  int channels() const { return sig_channels + 2; }
};

// ----- operations -----

// Samples object count uniformly in [1, max_objects], attributes uniformly,
// and positions by rejection until all pairs are separated by at least 3
// cells on each axis (which also keeps per-axis coordinates distinct, as the
// relation definitions require). Throws std::runtime_error after 1000
// placement attempts.
Scene generate_scene(uint64_t seed, int max_objects, const RenderOptions& opts = {});

// One fixed unit-norm signature vector per (attribute, value), drawn once
// from the signature seed. Row r = value_flat_index'th pair, length
// sig_channels.
const std::vector<std::vector<double>>& attribute_signatures(const RenderOptions& opts);

// Each object deposits a unit-peak Gaussian blob scaled by the sum of its
// four attribute signatures; two positional channels carry x/(w-1) and
// y/(l-1) ramps exactly (no noise); signature channels get additive Gaussian
// noise. Deterministic in (scene.seed, opts).
Tensor render(const Scene& scene, const RenderOptions& opts = {});

// left/right order by x, front/behind by y. Throws std::logic_error on a
// coordinate tie (generation prevents ties).
SceneGraph scene_graph(const Scene& scene);

// Drops every red object and all relation pairs touching one.
SceneGraph transform_ignore_red(const SceneGraph& g);

// Replaces all cubes with a single merged object (the smallest cube id)
// whose attribute values are defined only where every constituent agrees;
// all relations are dropped.
SceneGraph transform_group_cubes(const SceneGraph& g);

// ----- corpus I/O (line-delimited JSON, one scene per line) -----

void save_scenes(const std::string& path, const std::vector<Scene>& scenes);
std::vector<Scene> load_scenes(const std::string& path);

}  // namespace gvqa
