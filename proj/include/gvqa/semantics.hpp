#pragma once

#include <array>
#include <map>
#include <vector>

#include "gvqa/dsl.hpp"
#include "gvqa/nn.hpp"
#include "gvqa/rng.hpp"
#include "gvqa/scene.hpp"
#include "gvqa/tensor.hpp"

namespace gvqa {

// What the grounding module hands the executor: per-variable object vectors,
// pair vectors for every ordered variable pair, and objecthood scores. The
// executor never touches the image.
struct Bindings {
  Tensor v;       // [n, channels]
  Tensor v_pair;  // [n*n, d_pair], row i*n+j describes the ordered pair (i, j)
  Tensor h;       // [n], each in [0,1]

  int slots() const { return h.dim(0); }
};

// Learned quantities owned by the executor: per-attribute concept embeddings
// (one extra null row that non-objects can claim), per-attribute maps from
// object space into attribute space, relation concept embeddings, the
// relation scale, and the three count-comparison calibrations.
struct SemanticParameters {
  int d_attr = 16;
  int d_pair = 16;
  std::array<Tensor, kNumAttrs> concepts;      // [values+1, d_attr]
  std::array<Tensor, kNumAttrs> attr_map;      // [d_attr, channels]
  std::array<Tensor, kNumRels> rel_concepts;   // [d_pair]
  Tensor z;                                    // [1] relation scale
  Tensor cmp_a_gt, cmp_b_gt;                   // [1] each
  Tensor cmp_a_lt, cmp_b_lt;
  Tensor cmp_a_eq, cmp_b_eq;

  void init(Rng& rng, int channels, int d_attr_dim, int d_pair_dim);
  void collect(ParamList& out) const;
};

// ----- fuzzy-set algebra (pure; unit-testable with explicit tensors) -----

// x / (sum(x) + 1e-8): the soft uniqueness presupposition of definites.
// A near-empty input (mass < 1e-6) renormalizes to ~zero, which usually means
// an upstream extension collapsed; such calls bump a thread-local counter the
// trainer reports per epoch.
Tensor definite(const Tensor& x);
// Number of degenerate definite() calls on this thread since the last reset.
long degenerate_definite_count();
void reset_degenerate_definite_count();
// min(m_row, x, h) componentwise.
Tensor filter_set(const Tensor& m_row, const Tensor& x, const Tensor& h);
// min(O · definite(x), h).
Tensor relate_set(const Tensor& O, const Tensor& x, const Tensor& h);
// min(a, b, h).
Tensor intersect_set(const Tensor& a, const Tensor& b, const Tensor& h);
// max(a, b).
Tensor union_set(const Tensor& a, const Tensor& b);
// renormalize(M · definite(x)): distribution over the attribute's concepts
// (the null row included).
Tensor query_dist(const Tensor& M, const Tensor& x);
// Expected cardinality.
Tensor count_val(const Tensor& x);
// Probability that the set is nonempty.
Tensor exists_val(const Tensor& x);
// Pairwise column similarity E[i,j] = exp(-KL(M[:,i] || M[:,j])) with the
// diagonal masked to zero (an object never counts as sharing an attribute
// with itself). Requires strictly positive entries (softmax output).
Tensor att_eq_from_matrix(const Tensor& M);

// ----- execution context -----

// Supplies the tensors the executor needs, either computed from learned
// parameters and bindings, or assembled crisply from a ground-truth graph.
// The executor itself is shared, which is what makes crisp-limit equivalence
// against the symbolic oracle a meaningful check.
class ExecContext {
 public:
  virtual ~ExecContext() = default;
  virtual int slots() const = 0;
  virtual Tensor objecthood() = 0;
  virtual Tensor concept_matrix(int attr) = 0;   // [values+1, slots], columns sum to 1
  virtual Tensor relation_matrix(int rel) = 0;   // [slots, slots]
  virtual Tensor att_eq_matrix(int attr) = 0;    // [slots, slots], zero diagonal
  virtual Tensor compare_counts(const Tensor& s1, const Tensor& s2, Op mode) = 0;
};

class LearnedContext : public ExecContext {
 public:
  LearnedContext(const Bindings& b, const SemanticParameters& params);
  int slots() const override { return bindings_.slots(); }
  Tensor objecthood() override { return bindings_.h; }
  Tensor concept_matrix(int attr) override;
  Tensor relation_matrix(int rel) override;
  Tensor att_eq_matrix(int attr) override;
  Tensor compare_counts(const Tensor& s1, const Tensor& s2, Op mode) override;

 private:
  Bindings bindings_;
  const SemanticParameters& params_;
  std::map<int, Tensor> m_cache_;
  std::map<int, Tensor> o_cache_;
  std::map<int, Tensor> e_cache_;
};

// The boolean limit: one-hot concept columns (undefined attribute values put
// their mass on the null row), 0/1 relation and same-attribute matrices,
// all-ones objecthood, and exact integer count comparisons.
class CrispContext : public ExecContext {
 public:
  explicit CrispContext(const SceneGraph& g);
  int slots() const override { return static_cast<int>(slot_ids_.size()); }
  const std::vector<int>& slot_ids() const { return slot_ids_; }
  Tensor objecthood() override { return h_; }
  Tensor concept_matrix(int attr) override;
  Tensor relation_matrix(int rel) override;
  Tensor att_eq_matrix(int attr) override;
  Tensor compare_counts(const Tensor& s1, const Tensor& s2, Op mode) override;

 private:
  std::vector<int> slot_ids_;
  std::map<int, std::array<std::optional<int>, kNumAttrs>> attrs_;
  std::array<std::set<std::pair<int, int>>, kNumRels> relations_;
  Tensor h_;
  std::map<int, Tensor> m_cache_, o_cache_, e_cache_;
};

// ----- execution -----

struct ModelAnswer {
  enum class Kind { Distribution, Count, Probability };
  Kind kind = Kind::Probability;
  Tensor value;   // [values+1] | [1] | [1]
  int attr = -1;  // Distribution only
};

// Bottom-up evaluation of a typechecked program; the scene leaf is the
// all-ones fuzzy set (objecthood gates inside every AND-bearing operator).
ModelAnswer execute(const Program& p, ExecContext& ctx);

// Discrete decision: distributions by argmax (the null concept decides to a
// sentinel that never matches a gold label), counts to the nearest integer,
// probabilities thresholded at 0.5.
Answer decide(const ModelAnswer& ans);

// query: cross-entropy of the gold concept; booleans: binary cross-entropy;
// count: squared error. Throws std::invalid_argument on kind mismatch.
Tensor answer_loss(const ModelAnswer& ans, const Answer& gold);

}  // namespace gvqa
