#include <doctest.h>

#include <set>

#include "gvqa/dsl.hpp"
#include "gvqa/oracle.hpp"
#include "gvqa/scene.hpp"

using namespace gvqa;

namespace {

SceneObject make_obj(int id, int x, int y, const char* color, const char* shape,
                     const char* size, const char* material) {
  SceneObject o;
  o.id = id;
  o.x = x;
  o.y = y;
  o.attrs = {value_from_name(Attr::Color, color), value_from_name(Attr::Shape, shape),
             value_from_name(Attr::Size, size), value_from_name(Attr::Material, material)};
  return o;
}

}  // namespace

TEST_CASE("counting cubes over a two-cube scene") {
  Scene s;
  s.objects = {make_obj(0, 5, 10, "red", "cube", "small", "rubber"),
               make_obj(1, 20, 20, "blue", "cube", "large", "metal")};
  SceneGraph g = scene_graph(s);
  CHECK(execute_symbolic(parse("(count (filter (scene) shape:cube))"), g) == Answer::of_count(2));
}

TEST_CASE("relate reads the preimage of the unique target") {
  Scene s;
  s.objects = {make_obj(0, 3, 10, "red", "cube", "small", "rubber"),
               make_obj(1, 20, 16, "blue", "sphere", "large", "metal")};
  SceneGraph g = scene_graph(s);
  // Objects left of the blue sphere: the red cube exists.
  CHECK(execute_symbolic(parse("(exists (relate (filter (scene) color:blue) rel:left))"), g) ==
        Answer::of_bool(true));
  // Nothing sits left of the red cube.
  CHECK(execute_symbolic(parse("(exists (relate (filter (scene) color:red) rel:left))"), g) ==
        Answer::of_bool(false));
}

TEST_CASE("a matching concept on a one-object scene makes exists true") {
  Scene s;
  s.objects = {make_obj(0, 10, 10, "cyan", "cylinder", "small", "metal")};
  SceneGraph g = scene_graph(s);
  CHECK(execute_symbolic(parse("(exists (filter (scene) color:cyan))"), g) ==
        Answer::of_bool(true));
  CHECK(execute_symbolic(parse("(exists (filter (scene) color:blue))"), g) ==
        Answer::of_bool(false));
}

TEST_CASE("grouped grey cubes answer grey to a cube color query") {
  Scene s;
  s.objects = {make_obj(0, 5, 10, "gray", "cube", "small", "rubber"),
               make_obj(1, 15, 20, "gray", "cube", "large", "metal"),
               make_obj(2, 25, 5, "gray", "sphere", "small", "rubber")};
  SceneGraph g = transform_group_cubes(scene_graph(s));
  CHECK(execute_symbolic(parse("(query (filter (scene) shape:cube) color)"), g) ==
        Answer::parse("gray"));
  // The merged cube is one object.
  CHECK(execute_symbolic(parse("(count (filter (scene) shape:cube))"), g) == Answer::of_count(1));
}

TEST_CASE("same-attribute sets exclude the target itself") {
  Scene s;
  s.objects = {make_obj(0, 5, 10, "red", "cube", "small", "rubber"),
               make_obj(1, 20, 20, "red", "sphere", "large", "metal")};
  SceneGraph g = scene_graph(s);
  Program p = parse("(count (relate_att_eq (filter (scene) shape:cube) color))");
  CHECK(execute_symbolic(p, g) == Answer::of_count(1));
  const std::set<int> same = execute_set(p, p.nodes.back().inputs[0], g);
  CHECK(same == std::set<int>{1});
}

TEST_CASE("non-unique definite references raise presupposition failures") {
  Scene s;
  s.objects = {make_obj(0, 5, 10, "red", "cube", "small", "rubber"),
               make_obj(1, 20, 20, "red", "cube", "large", "metal")};
  SceneGraph g = scene_graph(s);
  CHECK_THROWS_AS(execute_symbolic(parse("(query (filter (scene) color:red) size)"), g),
                  PresuppositionFailure);
  CHECK_THROWS_AS(execute_symbolic(parse("(exists (relate (filter (scene) color:blue) rel:left))"), g),
                  PresuppositionFailure);
}

TEST_CASE("undefined merged attributes raise a dedicated error") {
  Scene s;
  s.objects = {make_obj(0, 5, 10, "red", "cube", "small", "rubber"),
               make_obj(1, 20, 20, "blue", "cube", "large", "metal"),
               make_obj(2, 12, 27, "gray", "sphere", "small", "rubber")};
  SceneGraph g = transform_group_cubes(scene_graph(s));
  CHECK_THROWS_AS(execute_symbolic(parse("(query (filter (scene) shape:cube) color)"), g),
                  UndefinedAttributeValue);
  // A filter over the undefined attribute simply fails to match.
  CHECK(execute_symbolic(parse("(count (filter (scene) color:red))"), g) == Answer::of_count(0));
}

TEST_CASE("filter is idempotent and intersect/union bound their operands") {
  for (uint64_t seed = 0; seed < 15; ++seed) {
    Scene s = generate_scene(seed, 6);
    SceneGraph g = scene_graph(s);
    for (int a = 0; a < kNumAttrs; ++a)
      for (int v = 0; v < attr_value_count(static_cast<Attr>(a)); ++v) {
        const std::string c = attr_name(static_cast<Attr>(a)) + ":" +
                              value_name(static_cast<Attr>(a), v);
        Program once = parse("(count (filter (scene) " + c + "))");
        Program twice = parse("(count (filter (filter (scene) " + c + ") " + c + "))");
        CHECK(execute_symbolic(once, g) == execute_symbolic(twice, g));
      }

    Program inter = parse("(count (intersect (filter (scene) size:small) (filter (scene) material:metal)))");
    Program uni = parse("(count (union (filter (scene) size:small) (filter (scene) material:metal)))");
    Program small_only = parse("(count (filter (scene) size:small))");
    const int inter_n = execute_symbolic(inter, g).count;
    const int uni_n = execute_symbolic(uni, g).count;
    const int small_n = execute_symbolic(small_only, g).count;
    CHECK(inter_n <= small_n);
    CHECK(uni_n >= small_n);
  }
}

TEST_CASE("counting the whole scene returns the graph size") {
  for (uint64_t seed = 20; seed < 30; ++seed) {
    Scene s = generate_scene(seed, 6);
    SceneGraph g = scene_graph(s);
    CHECK(execute_symbolic(parse("(count (scene))"), g) ==
          Answer::of_count(static_cast<int>(g.attributes.size())));
  }
}
