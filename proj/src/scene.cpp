#include "gvqa/scene.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <stdexcept>

#include <json.hpp>

#include "gvqa/rng.hpp"

namespace gvqa {

namespace {

const std::vector<std::string> kAttrNames = {"color", "shape", "size", "material"};

const std::vector<std::vector<std::string>> kAttrValues = {
    {"gray", "red", "blue", "green", "brown", "purple", "cyan", "yellow"},
    {"cube", "sphere", "cylinder"},
    {"small", "large"},
    {"rubber", "metal"},
};

const std::vector<std::string> kRelNames = {"left", "right", "front", "behind"};

}  // namespace

const std::vector<std::string>& attr_names() { return kAttrNames; }

const std::vector<std::string>& attr_values(Attr a) {
  return kAttrValues[static_cast<size_t>(a)];
}

int attr_value_count(Attr a) { return static_cast<int>(attr_values(a).size()); }

std::string attr_name(Attr a) { return kAttrNames[static_cast<size_t>(a)]; }

std::string value_name(Attr a, int v) { return attr_values(a)[static_cast<size_t>(v)]; }

int attr_from_name(const std::string& name) {
  for (size_t i = 0; i < kAttrNames.size(); ++i)
    if (kAttrNames[i] == name) return static_cast<int>(i);
  return -1;
}

int value_from_name(Attr a, const std::string& name) {
  const auto& vals = attr_values(a);
  for (size_t i = 0; i < vals.size(); ++i)
    if (vals[i] == name) return static_cast<int>(i);
  return -1;
}

int value_flat_index(Attr a, int v) {
  int off = 0;
  for (int i = 0; i < static_cast<int>(a); ++i)
    off += attr_value_count(static_cast<Attr>(i));
  return off + v;
}

int total_attr_values() {
  int n = 0;
  for (int i = 0; i < kNumAttrs; ++i) n += attr_value_count(static_cast<Attr>(i));
  return n;
}

std::string rel_name(Rel r) { return kRelNames[static_cast<size_t>(r)]; }

int rel_from_name(const std::string& name) {
  for (size_t i = 0; i < kRelNames.size(); ++i)
    if (kRelNames[i] == name) return static_cast<int>(i);
  return -1;
}

Rel rel_converse(Rel r) {
  switch (r) {
    case Rel::Left: return Rel::Right;
    case Rel::Right: return Rel::Left;
    case Rel::Front: return Rel::Behind;
    case Rel::Behind: return Rel::Front;
  }
  throw std::logic_error("rel_converse: bad relation");
}

std::vector<int> SceneGraph::ids() const {
  std::vector<int> out;
  out.reserve(attributes.size());
  for (const auto& [id, _] : attributes) out.push_back(id);
  return out;
}

Scene generate_scene(uint64_t seed, int max_objects, const RenderOptions& opts) {
  if (max_objects < 1) throw std::invalid_argument("generate_scene: max_objects must be >= 1");
  Rng rng(Rng::mix(seed, 0x5ce9e5eedULL));
  Scene scene;
  scene.seed = seed;
  const int count = 1 + rng.uniform_int(max_objects);
  // Keep blob centers two cells off the border so most of each blob's mass
  // stays on the grid.
  const int margin = 2;
  const int x_lo = margin, x_hi = opts.w - margin;  // [lo, hi)
  const int y_lo = margin, y_hi = opts.l - margin;
  for (int i = 0; i < count; ++i) {
    SceneObject obj;
    obj.id = i;
    for (int a = 0; a < kNumAttrs; ++a)
      obj.attrs[static_cast<size_t>(a)] = rng.uniform_int(attr_value_count(static_cast<Attr>(a)));
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      const int x = x_lo + rng.uniform_int(x_hi - x_lo);
      const int y = y_lo + rng.uniform_int(y_hi - y_lo);
      bool ok = true;
      for (const SceneObject& other : scene.objects)
        if (std::abs(other.x - x) < 3 || std::abs(other.y - y) < 3) {
          ok = false;
          break;
        }
      if (ok) {
        obj.x = x;
        obj.y = y;
        placed = true;
      }
    }
    if (!placed)
      throw std::runtime_error("generate_scene: grid too crowded to place object " +
                               std::to_string(i) + " after 1000 attempts");
    scene.objects.push_back(obj);
  }
  return scene;
}

const std::vector<std::vector<double>>& attribute_signatures(const RenderOptions& opts) {
  static std::map<std::pair<uint64_t, int>, std::vector<std::vector<double>>> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_pair(opts.signature_seed, opts.sig_channels);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;

  // The value signatures are the vertices of a regular simplex, spun by a
  // random rotation drawn from the signature seed. Each vector is dense,
  // unit-norm, and uniformly oriented (so concept embeddings must be
  // learned), while every pairwise dot product is exactly -1/(total-1) --
  // independently drawn directions leak enough cross-talk that the nearest
  // signature would misidentify attributes on a few percent of objects.
  const int total = total_attr_values();
  const int cs = opts.sig_channels;
  if (cs < total - 1)
    throw std::invalid_argument("attribute_signatures: " + std::to_string(cs) +
                                " signature channels cannot hold " + std::to_string(total) +
                                " mutually equidistant values");

  // Simplex coordinates: project the centered standard basis of R^total onto
  // the zero-sum hyperplane via the Helmert basis, then rescale to unit norm.
  std::vector<std::vector<double>> simplex(
      static_cast<size_t>(total), std::vector<double>(static_cast<size_t>(cs), 0.0));
  const double rescale = std::sqrt(static_cast<double>(total) / (total - 1));
  for (int i = 0; i < total; ++i)
    for (int k = 1; k < total; ++k) {
      double h = 0.0;
      if (i < k) h = 1.0;
      else if (i == k) h = -static_cast<double>(k);
      simplex[static_cast<size_t>(i)][static_cast<size_t>(k - 1)] =
          h / std::sqrt(static_cast<double>(k) * (k + 1)) * rescale;
    }

  // Random orthonormal basis of R^cs (Gram-Schmidt over Gaussian rows).
  Rng rng(Rng::mix(opts.signature_seed, 0x516e5ULL));
  std::vector<std::vector<double>> q(static_cast<size_t>(cs),
                                     std::vector<double>(static_cast<size_t>(cs)));
  for (auto& row : q) {
    for (double& x : row) x = rng.normal();
    for (const auto& prev : q) {
      if (&prev == &row) break;
      double d = 0.0;
      for (int c = 0; c < cs; ++c) d += row[static_cast<size_t>(c)] * prev[static_cast<size_t>(c)];
      for (int c = 0; c < cs; ++c) row[static_cast<size_t>(c)] -= d * prev[static_cast<size_t>(c)];
    }
    double norm2 = 0.0;
    for (double x : row) norm2 += x * x;
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& x : row) x *= inv;
  }

  std::vector<std::vector<double>> sigs(
      static_cast<size_t>(total), std::vector<double>(static_cast<size_t>(cs), 0.0));
  for (int i = 0; i < total; ++i)
    for (int k = 0; k < cs; ++k) {
      const double s = simplex[static_cast<size_t>(i)][static_cast<size_t>(k)];
      if (s == 0.0) continue;
      for (int c = 0; c < cs; ++c)
        sigs[static_cast<size_t>(i)][static_cast<size_t>(c)] += s * q[static_cast<size_t>(k)][static_cast<size_t>(c)];
    }
  return cache.emplace(key, std::move(sigs)).first->second;
}

Tensor render(const Scene& scene, const RenderOptions& opts) {
  const int l = opts.l, w = opts.w, cs = opts.sig_channels, c = opts.channels();
  Tensor img = Tensor::zeros({l, w, c});
  double* d = img.data();

  const auto& sigs = attribute_signatures(opts);
  const double inv_two_var = 1.0 / (2.0 * opts.blob_std * opts.blob_std);
  for (const SceneObject& obj : scene.objects) {
    // Sum of the object's four attribute-value signatures.
    std::vector<double> sig(static_cast<size_t>(cs), 0.0);
    for (int a = 0; a < kNumAttrs; ++a) {
      const auto& row = sigs[static_cast<size_t>(
          value_flat_index(static_cast<Attr>(a), obj.value(static_cast<Attr>(a))))];
      for (int ch = 0; ch < cs; ++ch) sig[static_cast<size_t>(ch)] += row[static_cast<size_t>(ch)];
    }
    for (int y = 0; y < l; ++y)
      for (int x = 0; x < w; ++x) {
        const double dy = y - obj.y, dx = x - obj.x;
        const double g = std::exp(-(dx * dx + dy * dy) * inv_two_var);
        if (g < 1e-12) continue;
        double* cell = d + (y * w + x) * c;
        for (int ch = 0; ch < cs; ++ch) cell[ch] += g * sig[static_cast<size_t>(ch)];
      }
  }

  if (opts.noise_std > 0.0) {
    Rng noise(Rng::mix(scene.seed, opts.signature_seed ^ 0x6e6f697365ULL));
    for (int p = 0; p < l * w; ++p)
      for (int ch = 0; ch < cs; ++ch) d[p * c + ch] += noise.normal(0.0, opts.noise_std);
  }

  // Positional ramps are exact by construction.
  for (int y = 0; y < l; ++y)
    for (int x = 0; x < w; ++x) {
      double* cell = d + (y * w + x) * c;
      cell[cs] = w > 1 ? static_cast<double>(x) / (w - 1) : 0.0;
      cell[cs + 1] = l > 1 ? static_cast<double>(y) / (l - 1) : 0.0;
    }
  return img;
}

SceneGraph scene_graph(const Scene& scene) {
  SceneGraph g;
  for (const SceneObject& obj : scene.objects) {
    std::array<std::optional<int>, kNumAttrs> attrs;
    for (int a = 0; a < kNumAttrs; ++a) attrs[static_cast<size_t>(a)] = obj.attrs[static_cast<size_t>(a)];
    g.attributes[obj.id] = attrs;
  }
  for (const SceneObject& a : scene.objects)
    for (const SceneObject& b : scene.objects) {
      if (a.id == b.id) continue;
      if (a.x == b.x || a.y == b.y)
        throw std::logic_error("scene_graph: coordinate tie between objects " +
                               std::to_string(a.id) + " and " + std::to_string(b.id));
      if (a.x < b.x) g.relations[static_cast<size_t>(Rel::Left)].insert({a.id, b.id});
      else g.relations[static_cast<size_t>(Rel::Right)].insert({a.id, b.id});
      if (a.y > b.y) g.relations[static_cast<size_t>(Rel::Front)].insert({a.id, b.id});
      else g.relations[static_cast<size_t>(Rel::Behind)].insert({a.id, b.id});
    }
  return g;
}

SceneGraph transform_ignore_red(const SceneGraph& g) {
  const int red = value_from_name(Attr::Color, "red");
  SceneGraph out;
  std::set<int> kept;
  for (const auto& [id, attrs] : g.attributes) {
    const auto& color = attrs[static_cast<size_t>(Attr::Color)];
    if (color.has_value() && *color == red) continue;
    out.attributes[id] = attrs;
    kept.insert(id);
  }
  for (int r = 0; r < kNumRels; ++r)
    for (const auto& pair : g.relations[static_cast<size_t>(r)])
      if (kept.count(pair.first) && kept.count(pair.second))
        out.relations[static_cast<size_t>(r)].insert(pair);
  return out;
}

SceneGraph transform_group_cubes(const SceneGraph& g) {
  const int cube = value_from_name(Attr::Shape, "cube");
  std::vector<int> cube_ids;
  for (const auto& [id, attrs] : g.attributes) {
    const auto& shape = attrs[static_cast<size_t>(Attr::Shape)];
    if (shape.has_value() && *shape == cube) cube_ids.push_back(id);
  }
  if (cube_ids.empty()) return g;

  SceneGraph out;
  for (const auto& [id, attrs] : g.attributes) {
    const auto& shape = attrs[static_cast<size_t>(Attr::Shape)];
    if (shape.has_value() && *shape == cube) continue;
    out.attributes[id] = attrs;
  }
  // Merged object keeps each attribute value only if every cube agrees on it.
  std::array<std::optional<int>, kNumAttrs> merged;
  for (int a = 0; a < kNumAttrs; ++a) {
    std::optional<int> common = g.attributes.at(cube_ids[0])[static_cast<size_t>(a)];
    for (int id : cube_ids) {
      const auto& v = g.attributes.at(id)[static_cast<size_t>(a)];
      if (!v.has_value() || !common.has_value() || *v != *common) common.reset();
    }
    merged[static_cast<size_t>(a)] = common;
  }
  out.attributes[cube_ids.front()] = merged;
  // Relations dropped: the grouped task is zero-hop.
  return out;
}

void save_scenes(const std::string& path, const std::vector<Scene>& scenes) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_scenes: cannot open " + path);
  for (const Scene& s : scenes) {
    nlohmann::json j;
    j["id"] = s.id;
    j["seed"] = s.seed;
    nlohmann::json objs = nlohmann::json::array();
    for (const SceneObject& o : s.objects) {
      nlohmann::json jo;
      jo["id"] = o.id;
      jo["x"] = o.x;
      jo["y"] = o.y;
      for (int a = 0; a < kNumAttrs; ++a)
        jo[attr_name(static_cast<Attr>(a))] = value_name(static_cast<Attr>(a), o.attrs[static_cast<size_t>(a)]);
      objs.push_back(jo);
    }
    j["objects"] = objs;
    out << j.dump() << '\n';
  }
}

std::vector<Scene> load_scenes(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_scenes: cannot open " + path);
  std::vector<Scene> scenes;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("load_scenes: " + path + ":" + std::to_string(line_no) + ": " +
                               e.what());
    }
    Scene s;
    s.id = j.at("id").get<int>();
    s.seed = j.at("seed").get<uint64_t>();
    for (const auto& jo : j.at("objects")) {
      SceneObject o;
      o.id = jo.at("id").get<int>();
      o.x = jo.at("x").get<int>();
      o.y = jo.at("y").get<int>();
      for (int a = 0; a < kNumAttrs; ++a) {
        const std::string vname = jo.at(attr_name(static_cast<Attr>(a))).get<std::string>();
        const int v = value_from_name(static_cast<Attr>(a), vname);
        if (v < 0)
          throw std::runtime_error("load_scenes: " + path + ":" + std::to_string(line_no) +
                                   ": unknown " + attr_name(static_cast<Attr>(a)) + " value '" +
                                   vname + "'");
        o.attrs[static_cast<size_t>(a)] = v;
      }
      s.objects.push_back(o);
    }
    scenes.push_back(std::move(s));
  }
  return scenes;
}

}  // namespace gvqa
