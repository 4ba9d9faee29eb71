#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gvqa/nn.hpp"
#include "gvqa/rng.hpp"
#include "gvqa/semantics.hpp"
#include "gvqa/tensor.hpp"

namespace gvqa {

// How each variable's scope (the image region left unclaimed by other
// attentions) is assembled during refinement:
//  - Parallel: product over all other variables' previous-step attentions.
//  - Sequential: product over lower-indexed variables' previous-step
//    attentions (causal masking; everything still updates in parallel).
//  - Recurrent: product over lower-indexed variables' attentions from the
//    CURRENT step, so updates chain through the variables in index order.
enum class ScopeMode { Parallel, Sequential, Recurrent };

// Where the pre-initialization Gaussians are centered: the foreground map's
// local maxima, or uniformly random cells.
enum class InitMode { Foreground, Random };

struct GroundingConfig {
  int n = 8;            // grounding variables
  int steps = 3;        // refinement steps
  ScopeMode mode = ScopeMode::Parallel;
  InitMode init = InitMode::Foreground;
  bool use_scope = true;        // false: drop scopes from all computations
  double gaussian_std = 2.0;    // cells
  int hidden = 16;              // conv-stack hidden width
  int d_pair = 16;              // pair embedding width

  void validate() const;  // throws std::invalid_argument on a bad field
};

// The five studied configurations: "parallel" (the base model), "sequential",
// "recurrent", "ablate_init" (random centers), "ablate_scope" (no scopes).
GroundingConfig grounding_variant(const std::string& name);
const std::vector<std::string>& grounding_variant_names();

std::string scope_mode_name(ScopeMode m);
ScopeMode scope_mode_from(const std::string& s);  // throws std::invalid_argument
std::string init_mode_name(InitMode m);
InitMode init_mode_from(const std::string& s);  // throws std::invalid_argument

struct GroundingParams {
  ConvStack cnn_f;                  // image -> foreground logits
  ConvStack cnn_0;                  // [I;F̄;Ā_pre] -> initial attention logits
  std::vector<ConvStack> cnn_step;  // one per refinement step
  ConvStack cnn_h;                  // objecthood feature extractor
  Linear mlp_h1, mlp_h2;            // pooled features -> objecthood logit
  Tensor pair_map;                  // [2c, d_pair], bias-free

  void init(Rng& rng, int channels, const GroundingConfig& cfg);
  void collect(ParamList& out) const;
};

// Everything the pipeline computes for one image, kept for inspection,
// attention export, and tests; `bindings` is what the executor consumes.
struct GroundingState {
  Tensor f;                                 // [l,w,1]
  std::vector<std::pair<int, int>> centers; // (row, col) per variable
  std::vector<Tensor> a_pre;                // unit-peak Gaussians, [l,w,1]
  std::vector<std::vector<Tensor>> attn;    // attn[m][i], m = 0..steps
  std::vector<std::vector<Tensor>> scope;   // scope[m-1][i], m = 1..steps
  Bindings bindings;
};

// ----- pipeline pieces (exposed for unit tests and visualization) -----

// F = sigmoid(cnn_f(I)), shape [l,w,1].
Tensor foreground(const Tensor& img, const GroundingParams& params);

// Strict 8-neighborhood local maxima of f in decreasing value (row-major on
// ties), padded with uniformly random cells when fewer than n exist; under
// InitMode::Random all centers are random.
std::vector<std::pair<int, int>> attention_centers(const Tensor& f, const GroundingConfig& cfg,
                                                   Rng& rng);

// Unit-peak (not unit-mass) isotropic Gaussian at `center`, shape [l,w,1].
Tensor gaussian_map(int l, int w, std::pair<int, int> center, double std_cells);

// A⁰_i = sigmoid(cnn_0([I; F̄; Ā_pre_i])), the shared stack applied per
// variable. Barred inputs are log-clamped channels.
std::vector<Tensor> init_attention(const Tensor& img, const Tensor& f,
                                   const std::vector<Tensor>& a_pre,
                                   const GroundingParams& params);

// Product of (1 - attn[j]) over j != i (Parallel) or j < i (Sequential /
// Recurrent); an empty product is the all-ones map.
Tensor scope_for(const std::vector<Tensor>& attn, int i, ScopeMode mode);

struct StepMaps {
  std::vector<Tensor> scope;
  std::vector<Tensor> attn;
};

// One refinement step m (1-based): computes this step's scopes from the
// previous attentions (same-step, already-updated ones in Recurrent mode) and
// feeds [I; F̄; R̄; Ā_prev] through the step's own stack. With use_scope off,
// the scope channel is omitted and all-ones scopes are reported.
StepMaps refine_step(const Tensor& img, const Tensor& f, const std::vector<Tensor>& prev,
                     int m, const GroundingConfig& cfg, const GroundingParams& params);

// v_i = sum over cells of (F ⊙ A_i) · I[cell,:]; rows stacked to [n, c].
Tensor bind_variables(const Tensor& img, const Tensor& f, const std::vector<Tensor>& attn);

// v_ij = P [v_i; v_j] for every ordered pair, flattened to [n*n, d_pair].
Tensor pair_embed(const Tensor& v, const Tensor& pair_map);

// h_i = sigmoid(mlp_h(mean over cells of cnn_h([I; F̄; Ā_i; R̄_i]))); the
// scope channel is omitted when use_scope is off. Returns [n].
Tensor objecthood(const Tensor& img, const Tensor& f, const std::vector<Tensor>& attn,
                  const std::vector<Tensor>& scope, const GroundingConfig& cfg,
                  const GroundingParams& params);

// foreground -> centers -> init -> `steps` refinements -> bind/pair/objecthood.
// Deterministic given (img, params, rng state); rng is consumed only for
// random center fill.
GroundingState ground(const Tensor& img, const GroundingConfig& cfg,
                      const GroundingParams& params, Rng& rng);

}  // namespace gvqa
