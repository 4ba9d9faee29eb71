#include "gvqa/oracle.hpp"

#include <algorithm>
#include <string>
#include <vector>

namespace gvqa {

namespace {

int the_unique(const std::set<int>& s, const char* consumer) {
  if (s.size() != 1)
    throw PresuppositionFailure(std::string(consumer) + ": definite reference denotes " +
                                std::to_string(s.size()) + " objects, expected exactly 1");
  return *s.begin();
}

int defined_value(const SceneGraph& g, int id, int attr, const char* consumer) {
  const auto& v = g.attributes.at(id)[static_cast<size_t>(attr)];
  if (!v.has_value())
    throw UndefinedAttributeValue(std::string(consumer) + ": object " + std::to_string(id) +
                                  " has no defined " + attr_name(static_cast<Attr>(attr)));
  return *v;
}

std::set<int> eval_set(const Program& p, int idx, const SceneGraph& g);

std::set<int> all_ids(const SceneGraph& g) {
  std::set<int> out;
  for (const auto& [id, _] : g.attributes) out.insert(id);
  return out;
}

std::set<int> eval_set(const Program& p, int idx, const SceneGraph& g) {
  const ProgNode& n = p.nodes[static_cast<size_t>(idx)];
  switch (n.op) {
    case Op::Scene:
      return all_ids(g);
    case Op::Filter: {
      std::set<int> in = eval_set(p, n.inputs[0], g);
      std::set<int> out;
      for (int id : in) {
        const auto& v = g.attributes.at(id)[static_cast<size_t>(n.attr)];
        if (v.has_value() && *v == n.value) out.insert(id);
      }
      return out;
    }
    case Op::Relate: {
      const int target = the_unique(eval_set(p, n.inputs[0], g), "relate");
      std::set<int> out;
      for (const auto& [i, j] : g.relations[static_cast<size_t>(n.rel)])
        if (j == target) out.insert(i);
      return out;
    }
    case Op::RelateAttEq: {
      const int target = the_unique(eval_set(p, n.inputs[0], g), "relate_att_eq");
      const int want = defined_value(g, target, n.attr, "relate_att_eq");
      std::set<int> out;
      for (const auto& [id, attrs] : g.attributes) {
        if (id == target) continue;  // exclusive reading
        const auto& v = attrs[static_cast<size_t>(n.attr)];
        if (v.has_value() && *v == want) out.insert(id);
      }
      return out;
    }
    case Op::Intersect: {
      std::set<int> a = eval_set(p, n.inputs[0], g);
      std::set<int> b = eval_set(p, n.inputs[1], g);
      std::set<int> out;
      std::set_intersection(a.begin(), a.end(), b.begin(), b.end(),
                            std::inserter(out, out.begin()));
      return out;
    }
    case Op::Union: {
      std::set<int> a = eval_set(p, n.inputs[0], g);
      std::set<int> b = eval_set(p, n.inputs[1], g);
      a.insert(b.begin(), b.end());
      return a;
    }
    default:
      throw std::logic_error("execute_set: node " + std::to_string(idx) + " (" +
                             op_name(n.op) + ") is not set-valued");
  }
}

}  // namespace

std::set<int> execute_set(const Program& p, int node, const SceneGraph& graph) {
  return eval_set(p, node, graph);
}

Answer execute_symbolic(const Program& p, const SceneGraph& graph) {
  const ProgNode& root = p.nodes[static_cast<size_t>(p.root())];
  switch (root.op) {
    case Op::Query: {
      const int target = the_unique(eval_set(p, root.inputs[0], graph), "query");
      const int v = defined_value(graph, target, root.attr, "query");
      return Answer::of_value(static_cast<Attr>(root.attr), v);
    }
    case Op::Count:
      return Answer::of_count(static_cast<int>(eval_set(p, root.inputs[0], graph).size()));
    case Op::Exists:
      return Answer::of_bool(!eval_set(p, root.inputs[0], graph).empty());
    case Op::CountGreater:
    case Op::CountLess:
    case Op::CountEqual: {
      const int a = static_cast<int>(eval_set(p, root.inputs[0], graph).size());
      const int b = static_cast<int>(eval_set(p, root.inputs[1], graph).size());
      if (root.op == Op::CountGreater) return Answer::of_bool(a > b);
      if (root.op == Op::CountLess) return Answer::of_bool(a < b);
      return Answer::of_bool(a == b);
    }
    case Op::QueryAttEq: {
      const int a = the_unique(eval_set(p, root.inputs[0], graph), "query_att_eq");
      const int b = the_unique(eval_set(p, root.inputs[1], graph), "query_att_eq");
      const int va = defined_value(graph, a, root.attr, "query_att_eq");
      const int vb = defined_value(graph, b, root.attr, "query_att_eq");
      return Answer::of_bool(va == vb);
    }
    default:
      throw std::logic_error("execute_symbolic: root " + op_name(root.op) +
                             " does not produce an answer");
  }
}

}  // namespace gvqa
