#pragma once

#include <set>
#include <stdexcept>

#include "gvqa/dsl.hpp"
#include "gvqa/scene.hpp"

namespace gvqa {

// A definite reference (the inner set of relate, relate_att_eq, query, and
// the operands of query_att_eq) did not denote exactly one object.
struct PresuppositionFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// An attribute value needed by the program is undefined on its object (the
// cube-grouping transform leaves disagreeing attributes undefined).
struct UndefinedAttributeValue : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Crisp set-theoretic execution over the ground-truth graph: filter keeps
// matching members, relate maps the unique target through the relation's
// preimage, relate_att_eq collects objects sharing the target's value
// (excluding the target itself), comparisons are integer comparisons.
// This is both the labeling source for generated questions and the
// brute-force equivalence oracle for the fuzzy executor.
Answer execute_symbolic(const Program& p, const SceneGraph& graph);

// Crisp value of one program node (exposed for the set-algebra property
// tests). Node must have ObjectSet type.
std::set<int> execute_set(const Program& p, int node, const SceneGraph& graph);

}  // namespace gvqa
