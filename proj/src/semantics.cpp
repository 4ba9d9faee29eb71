#include "gvqa/semantics.hpp"

#include <cmath>
#include <stdexcept>

namespace gvqa {

void SemanticParameters::init(Rng& rng, int channels, int d_attr_dim, int d_pair_dim) {
  d_attr = d_attr_dim;
  d_pair = d_pair_dim;
  for (int a = 0; a < kNumAttrs; ++a) {
    const int rows = attr_value_count(static_cast<Attr>(a)) + 1;  // + null concept
    concepts[static_cast<size_t>(a)] = param_normal(rng, {rows, d_attr}, 0.1);
    attr_map[static_cast<size_t>(a)] = param_normal(rng, {d_attr, channels}, 0.1);
  }
  for (int r = 0; r < kNumRels; ++r)
    rel_concepts[static_cast<size_t>(r)] = param_normal(rng, {d_pair}, 0.1);
  z = Tensor::full({1}, 1.0, true);
  cmp_a_gt = Tensor::full({1}, 1.0, true);
  cmp_b_gt = Tensor::zeros({1}, true);
  cmp_a_lt = Tensor::full({1}, 1.0, true);
  cmp_b_lt = Tensor::zeros({1}, true);
  cmp_a_eq = Tensor::full({1}, 1.0, true);
  cmp_b_eq = Tensor::zeros({1}, true);
}

void SemanticParameters::collect(ParamList& out) const {
  for (int a = 0; a < kNumAttrs; ++a) {
    const std::string name = attr_name(static_cast<Attr>(a));
    out.emplace_back("semantics.concepts." + name, concepts[static_cast<size_t>(a)]);
    out.emplace_back("semantics.attr_map." + name, attr_map[static_cast<size_t>(a)]);
  }
  for (int r = 0; r < kNumRels; ++r)
    out.emplace_back("semantics.rel." + rel_name(static_cast<Rel>(r)),
                     rel_concepts[static_cast<size_t>(r)]);
  out.emplace_back("semantics.z", z);
  out.emplace_back("semantics.cmp_a_gt", cmp_a_gt);
  out.emplace_back("semantics.cmp_b_gt", cmp_b_gt);
  out.emplace_back("semantics.cmp_a_lt", cmp_a_lt);
  out.emplace_back("semantics.cmp_b_lt", cmp_b_lt);
  out.emplace_back("semantics.cmp_a_eq", cmp_a_eq);
  out.emplace_back("semantics.cmp_b_eq", cmp_b_eq);
}

// ----- fuzzy-set algebra -----

namespace {
thread_local long g_degenerate_definites = 0;
}  // namespace

Tensor definite(const Tensor& x) {
  Tensor s = sum(x);
  if (s.item() < 1e-6) ++g_degenerate_definites;
  return div_scalar(x, add_const(s, 1e-8));
}

long degenerate_definite_count() { return g_degenerate_definites; }
void reset_degenerate_definite_count() { g_degenerate_definites = 0; }

Tensor filter_set(const Tensor& m_row, const Tensor& x, const Tensor& h) {
  return min_elem(min_elem(m_row, x), h);
}

Tensor relate_set(const Tensor& O, const Tensor& x, const Tensor& h) {
  const int n = x.dim(0);
  Tensor t = reshape(matmul(O, reshape(definite(x), {n, 1})), {n});
  return min_elem(t, h);
}

Tensor intersect_set(const Tensor& a, const Tensor& b, const Tensor& h) {
  return min_elem(min_elem(a, b), h);
}

Tensor union_set(const Tensor& a, const Tensor& b) { return max_elem(a, b); }

Tensor query_dist(const Tensor& M, const Tensor& x) {
  const int n = x.dim(0);
  Tensor o = reshape(matmul(M, reshape(definite(x), {n, 1})), {M.dim(0)});
  return div_scalar(o, add_const(sum(o), 1e-8));
}

Tensor count_val(const Tensor& x) { return sum(x); }

Tensor exists_val(const Tensor& x) { return max_reduce(x); }

Tensor att_eq_from_matrix(const Tensor& M) {
  if (M.rank() != 2)
    throw ShapeError("att_eq_from_matrix: input has shape " + shape_str(M.shape()) +
                     ", expected a matrix");
  const int rows = M.dim(0), n = M.dim(1);
  const bool rg = Tape::active() && M.requires_grad();
  Tensor out = Tensor::zeros({n, n}, rg);
  const double* md = M.data();
  double* od = out.data();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;  // masked: never same-attribute with itself
      double kl = 0.0;
      for (int m = 0; m < rows; ++m) {
        const double pi = md[m * n + i];
        const double pj = md[m * n + j];
        kl += pi * (std::log(pi) - std::log(pj));
      }
      od[i * n + j] = std::exp(-kl);
    }
  if (rg) {
    auto mi = M.impl();
    auto oi = out.impl();
    Tape::active()->record([mi, oi, rows, n] {
      if (!mi->requires_grad) return;
      const double* md = mi->data.data();
      double* mg = mi->grad.data();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          if (i == j) continue;
          const double g = -oi->grad[static_cast<size_t>(i * n + j)] *
                           oi->data[static_cast<size_t>(i * n + j)];
          if (g == 0.0) continue;
          for (int m = 0; m < rows; ++m) {
            const double pi = md[m * n + i];
            const double pj = md[m * n + j];
            mg[m * n + i] += g * (std::log(pi) + 1.0 - std::log(pj));
            mg[m * n + j] += g * (-pi / pj);
          }
        }
    });
  }
  return out;
}

// ----- learned context -----

LearnedContext::LearnedContext(const Bindings& b, const SemanticParameters& params)
    : bindings_(b), params_(params) {}

Tensor LearnedContext::concept_matrix(int attr) {
  auto it = m_cache_.find(attr);
  if (it != m_cache_.end()) return it->second;
  // M'[m,i] = y_m . (A_a v_i), softmaxed per column.
  const Tensor& y = params_.concepts[static_cast<size_t>(attr)];
  const Tensor& a = params_.attr_map[static_cast<size_t>(attr)];
  Tensor logits = matmul(y, matmul(a, transpose(bindings_.v)));
  Tensor m = softmax_cols(logits);
  m_cache_.emplace(attr, m);
  return m;
}

Tensor LearnedContext::relation_matrix(int rel) {
  auto it = o_cache_.find(rel);
  if (it != o_cache_.end()) return it->second;
  const int n = slots();
  const Tensor& y = params_.rel_concepts[static_cast<size_t>(rel)];
  Tensor scores = matmul(bindings_.v_pair, reshape(y, {params_.d_pair, 1}));
  Tensor o = sigmoid(scale(reshape(scores, {n, n}), params_.z));
  o_cache_.emplace(rel, o);
  return o;
}

Tensor LearnedContext::att_eq_matrix(int attr) {
  auto it = e_cache_.find(attr);
  if (it != e_cache_.end()) return it->second;
  Tensor e = att_eq_from_matrix(concept_matrix(attr));
  e_cache_.emplace(attr, e);
  return e;
}

Tensor LearnedContext::compare_counts(const Tensor& s1, const Tensor& s2, Op mode) {
  Tensor d = sub(s1, s2);
  switch (mode) {
    case Op::CountGreater:
      return sigmoid(add(scale(d, params_.cmp_a_gt), params_.cmp_b_gt));
    case Op::CountLess:
      return sigmoid(add(scale(d, params_.cmp_a_lt), params_.cmp_b_lt));
    case Op::CountEqual:
      return sigmoid(add(neg(scale(gvqa::abs(d), params_.cmp_a_eq)), params_.cmp_b_eq));
    default:
      throw std::logic_error("compare_counts: " + op_name(mode) + " is not a comparison");
  }
}

// ----- crisp context -----

CrispContext::CrispContext(const SceneGraph& g) {
  for (const auto& [id, attrs] : g.attributes) {
    slot_ids_.push_back(id);
    attrs_[id] = attrs;
  }
  relations_ = g.relations;
  h_ = Tensor::full({static_cast<int>(slot_ids_.size())}, 1.0);
}

Tensor CrispContext::concept_matrix(int attr) {
  auto it = m_cache_.find(attr);
  if (it != m_cache_.end()) return it->second;
  const int n = slots();
  const int rows = attr_value_count(static_cast<Attr>(attr)) + 1;
  Tensor m = Tensor::zeros({rows, n});
  for (int i = 0; i < n; ++i) {
    const auto& v = attrs_.at(slot_ids_[static_cast<size_t>(i)])[static_cast<size_t>(attr)];
    // Undefined values sit on the null row, so no concept row matches them.
    const int row = v.has_value() ? *v : rows - 1;
    m.data()[row * n + i] = 1.0;
  }
  m_cache_.emplace(attr, m);
  return m;
}

Tensor CrispContext::relation_matrix(int rel) {
  auto it = o_cache_.find(rel);
  if (it != o_cache_.end()) return it->second;
  const int n = slots();
  std::map<int, int> slot_of;
  for (int i = 0; i < n; ++i) slot_of[slot_ids_[static_cast<size_t>(i)]] = i;
  Tensor o = Tensor::zeros({n, n});
  for (const auto& [i, j] : relations_[static_cast<size_t>(rel)])
    o.data()[slot_of.at(i) * n + slot_of.at(j)] = 1.0;
  o_cache_.emplace(rel, o);
  return o;
}

Tensor CrispContext::att_eq_matrix(int attr) {
  auto it = e_cache_.find(attr);
  if (it != e_cache_.end()) return it->second;
  const int n = slots();
  Tensor e = Tensor::zeros({n, n});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const auto& vi = attrs_.at(slot_ids_[static_cast<size_t>(i)])[static_cast<size_t>(attr)];
      const auto& vj = attrs_.at(slot_ids_[static_cast<size_t>(j)])[static_cast<size_t>(attr)];
      if (vi.has_value() && vj.has_value() && *vi == *vj) e.data()[i * n + j] = 1.0;
    }
  e_cache_.emplace(attr, e);
  return e;
}

Tensor CrispContext::compare_counts(const Tensor& s1, const Tensor& s2, Op mode) {
  // Exact integer comparison: the infinite-steepness limit of the learned
  // sigmoid calibrations on integer-valued set sizes.
  const long a = std::llround(s1.item());
  const long b = std::llround(s2.item());
  bool truth = false;
  if (mode == Op::CountGreater) truth = a > b;
  else if (mode == Op::CountLess) truth = a < b;
  else if (mode == Op::CountEqual) truth = a == b;
  else throw std::logic_error("compare_counts: " + op_name(mode) + " is not a comparison");
  return Tensor::scalar(truth ? 1.0 : 0.0);
}

// ----- execution -----

ModelAnswer execute(const Program& p, ExecContext& ctx) {
  const int n = ctx.slots();
  std::vector<Tensor> sets(p.nodes.size());
  ModelAnswer answer;
  for (size_t i = 0; i < p.nodes.size(); ++i) {
    const ProgNode& node = p.nodes[i];
    switch (node.op) {
      case Op::Scene:
        sets[i] = Tensor::full({n}, 1.0);
        break;
      case Op::Filter: {
        Tensor m = ctx.concept_matrix(node.attr);
        sets[i] = filter_set(select_row(m, node.value), sets[static_cast<size_t>(node.inputs[0])],
                             ctx.objecthood());
        break;
      }
      case Op::Relate:
        sets[i] = relate_set(ctx.relation_matrix(node.rel),
                             sets[static_cast<size_t>(node.inputs[0])], ctx.objecthood());
        break;
      case Op::RelateAttEq:
        sets[i] = relate_set(ctx.att_eq_matrix(node.attr),
                             sets[static_cast<size_t>(node.inputs[0])], ctx.objecthood());
        break;
      case Op::Intersect:
        sets[i] = intersect_set(sets[static_cast<size_t>(node.inputs[0])],
                                sets[static_cast<size_t>(node.inputs[1])], ctx.objecthood());
        break;
      case Op::Union:
        sets[i] = union_set(sets[static_cast<size_t>(node.inputs[0])],
                            sets[static_cast<size_t>(node.inputs[1])]);
        break;
      case Op::Query:
        answer.kind = ModelAnswer::Kind::Distribution;
        answer.attr = node.attr;
        answer.value = query_dist(ctx.concept_matrix(node.attr),
                                  sets[static_cast<size_t>(node.inputs[0])]);
        break;
      case Op::Count:
        answer.kind = ModelAnswer::Kind::Count;
        answer.value = count_val(sets[static_cast<size_t>(node.inputs[0])]);
        break;
      case Op::Exists:
        answer.kind = ModelAnswer::Kind::Probability;
        answer.value = exists_val(sets[static_cast<size_t>(node.inputs[0])]);
        break;
      case Op::CountGreater:
      case Op::CountLess:
      case Op::CountEqual:
        answer.kind = ModelAnswer::Kind::Probability;
        answer.value = ctx.compare_counts(count_val(sets[static_cast<size_t>(node.inputs[0])]),
                                          count_val(sets[static_cast<size_t>(node.inputs[1])]),
                                          node.op);
        break;
      case Op::QueryAttEq: {
        // One definite routed through the same-attribute map, dotted with the
        // other definite's probability vector.
        Tensor same = relate_set(ctx.att_eq_matrix(node.attr),
                                 sets[static_cast<size_t>(node.inputs[0])], ctx.objecthood());
        answer.kind = ModelAnswer::Kind::Probability;
        answer.value = dot(same, definite(sets[static_cast<size_t>(node.inputs[1])]));
        break;
      }
    }
  }
  if (!answer.value.defined())
    throw std::logic_error("execute: program root does not produce an answer");
  return answer;
}

Answer decide(const ModelAnswer& ans) {
  switch (ans.kind) {
    case ModelAnswer::Kind::Distribution: {
      int best = 0;
      for (int i = 1; i < ans.value.numel(); ++i)
        if (ans.value.value_at(i) > ans.value.value_at(best)) best = i;
      const int real_values = attr_value_count(static_cast<Attr>(ans.attr));
      Answer a;
      a.kind = Answer::Kind::Value;
      a.attr = ans.attr;
      // The null row decides to a sentinel no gold label ever equals.
      a.value = best < real_values ? best : -1;
      return a;
    }
    case ModelAnswer::Kind::Count:
      return Answer::of_count(static_cast<int>(std::llround(ans.value.item())));
    case ModelAnswer::Kind::Probability:
      return Answer::of_bool(ans.value.item() > 0.5);
  }
  throw std::logic_error("decide: bad answer kind");
}

Tensor answer_loss(const ModelAnswer& ans, const Answer& gold) {
  switch (ans.kind) {
    case ModelAnswer::Kind::Distribution: {
      if (gold.kind != Answer::Kind::Value)
        throw std::invalid_argument("answer_loss: distribution answer vs non-value gold '" +
                                    gold.to_string() + "'");
      Tensor pick = Tensor::zeros({ans.value.dim(0)});
      pick.data()[gold.value] = 1.0;
      return neg(log_clamped(dot(ans.value, pick)));
    }
    case ModelAnswer::Kind::Count: {
      if (gold.kind != Answer::Kind::Count)
        throw std::invalid_argument("answer_loss: count answer vs non-count gold '" +
                                    gold.to_string() + "'");
      Tensor d = add_const(ans.value, -static_cast<double>(gold.count));
      return mul(d, d);
    }
    case ModelAnswer::Kind::Probability: {
      if (gold.kind != Answer::Kind::Bool)
        throw std::invalid_argument("answer_loss: probability answer vs non-boolean gold '" +
                                    gold.to_string() + "'");
      if (gold.truth) return neg(log_clamped(ans.value));
      return neg(log_clamped(sub(Tensor::scalar(1.0), ans.value)));
    }
  }
  throw std::logic_error("answer_loss: bad answer kind");
}

}  // namespace gvqa
