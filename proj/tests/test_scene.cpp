#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>

#include "gvqa/scene.hpp"

using namespace gvqa;

namespace {

SceneObject make_obj(int id, int x, int y, const char* color, const char* shape,
                     const char* size, const char* material) {
  SceneObject o;
  o.id = id;
  o.x = x;
  o.y = y;
  o.attrs[0] = value_from_name(Attr::Color, color);
  o.attrs[1] = value_from_name(Attr::Shape, shape);
  o.attrs[2] = value_from_name(Attr::Size, size);
  o.attrs[3] = value_from_name(Attr::Material, material);
  REQUIRE(o.attrs[0] >= 0);
  REQUIRE(o.attrs[1] >= 0);
  REQUIRE(o.attrs[2] >= 0);
  REQUIRE(o.attrs[3] >= 0);
  return o;
}

RenderOptions noise_free() {
  RenderOptions opts;
  opts.noise_std = 0.0;
  return opts;
}

}  // namespace

TEST_CASE("max_objects one yields exactly one object") {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    Scene s = generate_scene(seed, 1);
    CHECK(s.objects.size() == 1);
  }
}

TEST_CASE("generated objects keep pairwise center distance of at least 3") {
  for (uint64_t seed = 0; seed < 50; ++seed) {
    Scene s = generate_scene(seed, 6);
    CHECK(s.objects.size() >= 1);
    CHECK(s.objects.size() <= 6);
    for (size_t i = 0; i < s.objects.size(); ++i)
      for (size_t j = i + 1; j < s.objects.size(); ++j) {
        const auto& a = s.objects[i];
        const auto& b = s.objects[j];
        CHECK(std::abs(a.x - b.x) >= 3);
        CHECK(std::abs(a.y - b.y) >= 3);
        const double d = std::hypot(a.x - b.x, a.y - b.y);
        CHECK(d >= 3.0);
      }
  }
}

TEST_CASE("fixed seed reproduces the identical scene") {
  Scene a = generate_scene(42, 6);
  Scene b = generate_scene(42, 6);
  REQUIRE(a.objects.size() == b.objects.size());
  for (size_t i = 0; i < a.objects.size(); ++i) {
    CHECK(a.objects[i].x == b.objects[i].x);
    CHECK(a.objects[i].y == b.objects[i].y);
    CHECK(a.objects[i].attrs == b.objects[i].attrs);
  }
}

TEST_CASE("an overcrowded grid raises a placement error") {
  RenderOptions tiny;
  tiny.l = 8;
  tiny.w = 8;
  int failures = 0;
  for (uint64_t seed = 0; seed < 30; ++seed) {
    try {
      generate_scene(seed, 12, tiny);
    } catch (const std::runtime_error&) {
      ++failures;
    }
  }
  CHECK(failures > 0);
}

TEST_CASE("positional channels hold exact normalized ramps") {
  Scene s = generate_scene(7, 3);
  RenderOptions opts;
  Tensor img = render(s, opts);
  const int c = opts.channels();
  auto at = [&](int y, int x, int ch) { return img.value_at((y * opts.w + x) * c + ch); };
  CHECK(at(0, 0, 14) == doctest::Approx(0.0));
  CHECK(at(0, 0, 15) == doctest::Approx(0.0));
  CHECK(at(opts.l - 1, 5, 15) == doctest::Approx(1.0));
  CHECK(at(9, opts.w - 1, 14) == doctest::Approx(1.0));
  CHECK(at(16, 8, 14) == doctest::Approx(8.0 / 31.0));
  CHECK(at(16, 8, 15) == doctest::Approx(16.0 / 31.0));
}

TEST_CASE("changing one object's color perturbs the map only near its blob") {
  Scene a;
  a.seed = 5;
  a.objects = {make_obj(0, 10, 12, "red", "cube", "small", "rubber"),
               make_obj(1, 25, 25, "blue", "sphere", "large", "metal")};
  Scene b = a;
  b.objects[0].attrs[0] = value_from_name(Attr::Color, "green");

  RenderOptions opts = noise_free();
  Tensor ia = render(a, opts);
  Tensor ib = render(b, opts);
  const int c = opts.channels();
  double center_diff = 0.0;
  for (int y = 0; y < opts.l; ++y)
    for (int x = 0; x < opts.w; ++x) {
      double diff = 0.0;
      for (int ch = 0; ch < c; ++ch) {
        const int idx = (y * opts.w + x) * c + ch;
        diff = std::max(diff, std::abs(ia.value_at(idx) - ib.value_at(idx)));
      }
      const double dist = std::hypot(y - 12.0, x - 10.0);
      if (dist > 8.0) CHECK(diff < 1e-6);
      if (y == 12 && x == 10) center_diff = diff;
    }
  CHECK(center_diff > 0.1);
}

TEST_CASE("rendering is deterministic for a fixed scene and signature seed") {
  Scene s = generate_scene(99, 5);
  Tensor a = render(s);
  Tensor b = render(s);
  CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<size_t>(a.numel())) == 0);
}

TEST_CASE("noise-free blob centers decode back to their attributes") {
  RenderOptions opts = noise_free();
  const auto& sigs = attribute_signatures(opts);
  for (uint64_t seed = 100; seed < 140; ++seed) {
    Scene s = generate_scene(seed, 6);
    Tensor img = render(s, opts);
    for (const SceneObject& obj : s.objects) {
      const double* col = img.data() + (obj.y * opts.w + obj.x) * opts.channels();
      for (int a = 0; a < kNumAttrs; ++a) {
        const Attr attr = static_cast<Attr>(a);
        int best = -1;
        double best_dot = -1e9;
        for (int v = 0; v < attr_value_count(attr); ++v) {
          const auto& sig = sigs[static_cast<size_t>(value_flat_index(attr, v))];
          double d = 0.0;
          for (int ch = 0; ch < opts.sig_channels; ++ch) d += col[ch] * sig[static_cast<size_t>(ch)];
          if (d > best_dot) {
            best_dot = d;
            best = v;
          }
        }
        CHECK(best == obj.value(attr));
      }
    }
  }
}

TEST_CASE("relation sets order by coordinates with converse closure and totality") {
  Scene s;
  s.objects = {make_obj(0, 3, 10, "red", "cube", "small", "rubber"),
               make_obj(1, 20, 5, "blue", "sphere", "large", "metal"),
               make_obj(2, 12, 20, "gray", "cylinder", "small", "metal")};
  SceneGraph g = scene_graph(s);

  CHECK(g.relations[static_cast<size_t>(Rel::Left)].count({0, 1}) == 1);
  CHECK(g.relations[static_cast<size_t>(Rel::Right)].count({1, 0}) == 1);

  // Object 0 has larger y than object 1, so it sits in front of it.
  CHECK(g.relations[static_cast<size_t>(Rel::Front)].count({0, 1}) == 1);
  CHECK(g.relations[static_cast<size_t>(Rel::Behind)].count({1, 0}) == 1);

  for (int r = 0; r < kNumRels; ++r) {
    const Rel rel = static_cast<Rel>(r);
    for (const auto& [i, j] : g.relations[static_cast<size_t>(r)]) {
      CHECK(i != j);
      CHECK(g.relations[static_cast<size_t>(rel_converse(rel))].count({j, i}) == 1);
    }
  }
  // Each ordered pair of distinct objects stands in exactly one of left/right
  // and one of front/behind: 3 objects -> 6 ordered pairs per axis.
  CHECK(g.relations[static_cast<size_t>(Rel::Left)].size() +
            g.relations[static_cast<size_t>(Rel::Right)].size() ==
        6);
  CHECK(g.relations[static_cast<size_t>(Rel::Front)].size() +
            g.relations[static_cast<size_t>(Rel::Behind)].size() ==
        6);
}

TEST_CASE("coordinate ties are rejected by scene_graph") {
  Scene s;
  s.objects = {make_obj(0, 5, 10, "red", "cube", "small", "rubber"),
               make_obj(1, 5, 20, "blue", "sphere", "large", "metal")};
  CHECK_THROWS_AS(scene_graph(s), std::logic_error);
}

TEST_CASE("ignore-red keeps red-free graphs identical") {
  Scene s;
  s.objects = {make_obj(0, 5, 10, "blue", "cube", "small", "rubber"),
               make_obj(1, 15, 20, "gray", "sphere", "large", "metal")};
  SceneGraph g = scene_graph(s);
  CHECK(transform_ignore_red(g) == g);
}

TEST_CASE("ignore-red removes red objects and their relation pairs") {
  Scene s;
  s.objects = {make_obj(0, 5, 10, "red", "cube", "small", "rubber"),
               make_obj(1, 15, 20, "blue", "sphere", "large", "metal"),
               make_obj(2, 25, 5, "blue", "cylinder", "small", "metal")};
  SceneGraph g = transform_ignore_red(scene_graph(s));
  CHECK(g.attributes.size() == 2);
  CHECK(g.attributes.count(0) == 0);
  for (int r = 0; r < kNumRels; ++r)
    for (const auto& [i, j] : g.relations[static_cast<size_t>(r)]) {
      CHECK(i != 0);
      CHECK(j != 0);
    }
  CHECK(g.relations[static_cast<size_t>(Rel::Left)].size() +
            g.relations[static_cast<size_t>(Rel::Right)].size() ==
        2);
}

TEST_CASE("grouping cubes merges agreeing attributes") {
  Scene s;
  s.objects = {make_obj(0, 5, 10, "gray", "cube", "small", "rubber"),
               make_obj(1, 15, 20, "gray", "cube", "large", "metal"),
               make_obj(2, 25, 5, "blue", "sphere", "small", "metal")};
  SceneGraph g = transform_group_cubes(scene_graph(s));
  CHECK(g.attributes.size() == 2);
  REQUIRE(g.attributes.count(0) == 1);  // merged object under the smallest cube id
  const auto& merged = g.attributes.at(0);
  REQUIRE(merged[static_cast<size_t>(Attr::Color)].has_value());
  CHECK(*merged[static_cast<size_t>(Attr::Color)] == value_from_name(Attr::Color, "gray"));
  REQUIRE(merged[static_cast<size_t>(Attr::Shape)].has_value());
  CHECK(*merged[static_cast<size_t>(Attr::Shape)] == value_from_name(Attr::Shape, "cube"));
  // Sizes and materials disagree -> undefined.
  CHECK_FALSE(merged[static_cast<size_t>(Attr::Size)].has_value());
  CHECK_FALSE(merged[static_cast<size_t>(Attr::Material)].has_value());
  // Relations are dropped entirely.
  for (int r = 0; r < kNumRels; ++r) CHECK(g.relations[static_cast<size_t>(r)].empty());
}

TEST_CASE("grouping cubes of different colors leaves color undefined") {
  Scene s;
  s.objects = {make_obj(0, 5, 10, "red", "cube", "small", "rubber"),
               make_obj(1, 15, 20, "blue", "cube", "small", "rubber")};
  SceneGraph g = transform_group_cubes(scene_graph(s));
  CHECK(g.attributes.size() == 1);
  CHECK_FALSE(g.attributes.at(0)[static_cast<size_t>(Attr::Color)].has_value());
  CHECK(g.attributes.at(0)[static_cast<size_t>(Attr::Size)].has_value());
}

TEST_CASE("graphs without cubes pass through the grouping transform") {
  Scene s;
  s.objects = {make_obj(0, 5, 10, "red", "sphere", "small", "rubber"),
               make_obj(1, 15, 20, "blue", "cylinder", "large", "metal")};
  SceneGraph g = scene_graph(s);
  CHECK(transform_group_cubes(g) == g);
}

TEST_CASE("scene corpus round-trips through the line-delimited format") {
  std::vector<Scene> scenes;
  for (uint64_t seed = 0; seed < 8; ++seed) {
    Scene s = generate_scene(seed, 6);
    s.id = static_cast<int>(seed);
    scenes.push_back(s);
  }
  const std::string path = "test_scenes_roundtrip.jsonl";
  save_scenes(path, scenes);
  std::vector<Scene> loaded = load_scenes(path);
  std::remove(path.c_str());
  REQUIRE(loaded.size() == scenes.size());
  for (size_t i = 0; i < scenes.size(); ++i) {
    CHECK(loaded[i].id == scenes[i].id);
    CHECK(loaded[i].seed == scenes[i].seed);
    REQUIRE(loaded[i].objects.size() == scenes[i].objects.size());
    for (size_t k = 0; k < scenes[i].objects.size(); ++k) {
      CHECK(loaded[i].objects[k].id == scenes[i].objects[k].id);
      CHECK(loaded[i].objects[k].x == scenes[i].objects[k].x);
      CHECK(loaded[i].objects[k].y == scenes[i].objects[k].y);
      CHECK(loaded[i].objects[k].attrs == scenes[i].objects[k].attrs);
    }
  }
}
