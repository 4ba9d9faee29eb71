#include "gvqa/grounding.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gvqa {

void GroundingConfig::validate() const {
  if (n < 1) throw std::invalid_argument("grounding config: n must be >= 1");
  if (steps < 1) throw std::invalid_argument("grounding config: steps must be >= 1");
  if (gaussian_std <= 0.0)
    throw std::invalid_argument("grounding config: gaussian_std must be positive");
  if (hidden < 1 || d_pair < 1)
    throw std::invalid_argument("grounding config: widths must be >= 1");
}

GroundingConfig grounding_variant(const std::string& name) {
  GroundingConfig cfg;
  if (name == "parallel") return cfg;
  if (name == "sequential") {
    cfg.mode = ScopeMode::Sequential;
    return cfg;
  }
  if (name == "recurrent") {
    cfg.mode = ScopeMode::Recurrent;
    return cfg;
  }
  if (name == "ablate_init") {
    cfg.init = InitMode::Random;
    return cfg;
  }
  if (name == "ablate_scope") {
    cfg.use_scope = false;
    return cfg;
  }
  throw std::invalid_argument("unknown grounding variant '" + name + "'");
}

const std::vector<std::string>& grounding_variant_names() {
  static const std::vector<std::string> names = {"parallel", "sequential", "recurrent",
                                                 "ablate_init", "ablate_scope"};
  return names;
}

std::string scope_mode_name(ScopeMode m) {
  switch (m) {
    case ScopeMode::Parallel: return "parallel";
    case ScopeMode::Sequential: return "sequential";
    case ScopeMode::Recurrent: return "recurrent";
  }
  throw std::logic_error("unhandled scope mode");
}

ScopeMode scope_mode_from(const std::string& s) {
  if (s == "parallel") return ScopeMode::Parallel;
  if (s == "sequential") return ScopeMode::Sequential;
  if (s == "recurrent") return ScopeMode::Recurrent;
  throw std::invalid_argument("unknown scope mode '" + s + "'");
}

std::string init_mode_name(InitMode m) {
  return m == InitMode::Foreground ? "foreground" : "random";
}

InitMode init_mode_from(const std::string& s) {
  if (s == "foreground") return InitMode::Foreground;
  if (s == "random") return InitMode::Random;
  throw std::invalid_argument("unknown init mode '" + s + "'");
}

void GroundingParams::init(Rng& rng, int channels, const GroundingConfig& cfg) {
  cfg.validate();
  const int width = cfg.hidden;
  // Barred channels: foreground plus attention everywhere, plus scope unless
  // ablated.
  const int refine_in = channels + (cfg.use_scope ? 3 : 2);
  cnn_f = ConvStack(rng, channels, width, 1);
  cnn_0 = ConvStack(rng, channels + 2, width, 1);
  cnn_step.clear();
  for (int m = 0; m < cfg.steps; ++m) cnn_step.emplace_back(rng, refine_in, width, 1);
  cnn_h = ConvStack(rng, refine_in, width, width);
  mlp_h1 = Linear(rng, width, width);
  mlp_h2 = Linear(rng, width, 1);
  // Start every slot mostly "not an object": scenes never fill all n slots,
  // so a negative prior keeps surplus slots out of early counts.
  mlp_h2.bias.data()[0] = -2.0;
  pair_map = param_normal(rng, {2 * channels, cfg.d_pair}, std::sqrt(1.0 / (2 * channels)));
}

void GroundingParams::collect(ParamList& out) const {
  cnn_f.collect("grounding.foreground", out);
  cnn_0.collect("grounding.init", out);
  for (size_t m = 0; m < cnn_step.size(); ++m)
    cnn_step[m].collect("grounding.step" + std::to_string(m + 1), out);
  cnn_h.collect("grounding.objecthood", out);
  mlp_h1.collect("grounding.objecthood.fc1", out);
  mlp_h2.collect("grounding.objecthood.fc2", out);
  out.emplace_back("grounding.pair_map", pair_map);
}

Tensor foreground(const Tensor& img, const GroundingParams& params) {
  return sigmoid(params.cnn_f(img));
}

std::vector<std::pair<int, int>> attention_centers(const Tensor& f, const GroundingConfig& cfg,
                                                   Rng& rng) {
  const int l = f.dim(0), w = f.dim(1);
  std::vector<std::pair<int, int>> centers;
  if (cfg.init == InitMode::Foreground) {
    // (value, row-major index) of every cell strictly above its in-bounds
    // 8-neighborhood.
    std::vector<std::pair<double, int>> maxima;
    for (int r = 0; r < l; ++r)
      for (int c = 0; c < w; ++c) {
        const double v = f.value_at(r * w + c);
        bool strict = true;
        for (int dr = -1; dr <= 1 && strict; ++dr)
          for (int dc = -1; dc <= 1 && strict; ++dc) {
            if (dr == 0 && dc == 0) continue;
            const int rr = r + dr, cc = c + dc;
            if (rr < 0 || rr >= l || cc < 0 || cc >= w) continue;
            if (f.value_at(rr * w + cc) >= v) strict = false;
          }
        if (strict) maxima.emplace_back(v, r * w + c);
      }
    std::sort(maxima.begin(), maxima.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;  // equal peaks: row-major order
    });
    for (size_t k = 0; k < maxima.size() && static_cast<int>(centers.size()) < cfg.n; ++k)
      centers.emplace_back(maxima[k].second / w, maxima[k].second % w);
  }
  while (static_cast<int>(centers.size()) < cfg.n)
    centers.emplace_back(rng.uniform_int(l), rng.uniform_int(w));
  return centers;
}

Tensor gaussian_map(int l, int w, std::pair<int, int> center, double std_cells) {
  Tensor g = Tensor::zeros({l, w, 1});
  const double inv = 1.0 / (2.0 * std_cells * std_cells);
  for (int r = 0; r < l; ++r)
    for (int c = 0; c < w; ++c) {
      const double d2 = static_cast<double>((r - center.first) * (r - center.first) +
                                            (c - center.second) * (c - center.second));
      g.data()[r * w + c] = std::exp(-d2 * inv);
    }
  return g;
}

std::vector<Tensor> init_attention(const Tensor& img, const Tensor& f,
                                   const std::vector<Tensor>& a_pre,
                                   const GroundingParams& params) {
  Tensor fbar = log_clamped(f);
  std::vector<Tensor> out;
  out.reserve(a_pre.size());
  for (const Tensor& pre : a_pre)
    out.push_back(sigmoid(params.cnn_0(concat({img, fbar, log_clamped(pre)}, 2))));
  return out;
}

Tensor scope_for(const std::vector<Tensor>& attn, int i, ScopeMode mode) {
  const Shape& s = attn[0].shape();
  Tensor acc = Tensor::full(s, 1.0);
  const int n = static_cast<int>(attn.size());
  const int last = mode == ScopeMode::Parallel ? n : i;
  for (int j = 0; j < last; ++j) {
    if (j == i) continue;
    acc = mul(acc, sub(Tensor::full(s, 1.0), attn[static_cast<size_t>(j)]));
  }
  return acc;
}

StepMaps refine_step(const Tensor& img, const Tensor& f, const std::vector<Tensor>& prev,
                     int m, const GroundingConfig& cfg, const GroundingParams& params) {
  const ConvStack& cnn = params.cnn_step[static_cast<size_t>(m - 1)];
  Tensor fbar = log_clamped(f);
  const int n = static_cast<int>(prev.size());
  StepMaps out;
  out.scope.resize(static_cast<size_t>(n));
  out.attn.resize(static_cast<size_t>(n));

  if (!cfg.use_scope) {
    // Scopes removed from all computations; report all-ones (fully
    // unclaimed) so downstream bookkeeping keeps uniform shapes.
    for (int i = 0; i < n; ++i) {
      out.scope[static_cast<size_t>(i)] = Tensor::full(prev[0].shape(), 1.0);
      out.attn[static_cast<size_t>(i)] = sigmoid(cnn(concat(
          {img, fbar, log_clamped(prev[static_cast<size_t>(i)])}, 2)));
    }
    return out;
  }

  if (cfg.mode == ScopeMode::Recurrent) {
    // Updates chain through the variables: each scope reads the attentions
    // already produced this step.
    std::vector<Tensor> cur = prev;
    for (int i = 0; i < n; ++i) {
      Tensor r = scope_for(cur, i, ScopeMode::Recurrent);
      cur[static_cast<size_t>(i)] = sigmoid(cnn(concat(
          {img, fbar, log_clamped(r), log_clamped(prev[static_cast<size_t>(i)])}, 2)));
      out.scope[static_cast<size_t>(i)] = r;
    }
    out.attn = std::move(cur);
    return out;
  }

  for (int i = 0; i < n; ++i) {
    Tensor r = scope_for(prev, i, cfg.mode);
    out.scope[static_cast<size_t>(i)] = r;
    out.attn[static_cast<size_t>(i)] = sigmoid(cnn(concat(
        {img, fbar, log_clamped(r), log_clamped(prev[static_cast<size_t>(i)])}, 2)));
  }
  return out;
}

Tensor bind_variables(const Tensor& img, const Tensor& f, const std::vector<Tensor>& attn) {
  const int l = img.dim(0), w = img.dim(1), c = img.dim(2);
  Tensor columns = reshape(img, {l * w, c});
  std::vector<Tensor> rows;
  rows.reserve(attn.size());
  for (const Tensor& a : attn) {
    Tensor weights = reshape(mul(f, a), {1, l * w});
    rows.push_back(matmul(weights, columns));
  }
  return concat(rows, 0);
}

Tensor pair_embed(const Tensor& v, const Tensor& pair_map) {
  return matmul(pair_concat(v), pair_map);
}

Tensor objecthood(const Tensor& img, const Tensor& f, const std::vector<Tensor>& attn,
                  const std::vector<Tensor>& scope, const GroundingConfig& cfg,
                  const GroundingParams& params) {
  Tensor fbar = log_clamped(f);
  std::vector<Tensor> parts;
  parts.reserve(attn.size());
  for (size_t i = 0; i < attn.size(); ++i) {
    Tensor input = cfg.use_scope
                       ? concat({img, fbar, log_clamped(attn[i]), log_clamped(scope[i])}, 2)
                       : concat({img, fbar, log_clamped(attn[i])}, 2);
    Tensor pooled = mean_spatial(params.cnn_h(input));
    parts.push_back(sigmoid(params.mlp_h2(relu(params.mlp_h1(pooled)))));
  }
  return concat(parts, 0);
}

GroundingState ground(const Tensor& img, const GroundingConfig& cfg,
                      const GroundingParams& params, Rng& rng) {
  cfg.validate();
  const int l = img.dim(0), w = img.dim(1);
  GroundingState st;
  st.f = foreground(img, params);
  st.centers = attention_centers(st.f, cfg, rng);
  st.a_pre.reserve(st.centers.size());
  for (const auto& c : st.centers) st.a_pre.push_back(gaussian_map(l, w, c, cfg.gaussian_std));
  st.attn.push_back(init_attention(img, st.f, st.a_pre, params));
  for (int m = 1; m <= cfg.steps; ++m) {
    StepMaps maps = refine_step(img, st.f, st.attn.back(), m, cfg, params);
    st.scope.push_back(std::move(maps.scope));
    st.attn.push_back(std::move(maps.attn));
  }
  st.bindings.v = bind_variables(img, st.f, st.attn.back());
  st.bindings.v_pair = pair_embed(st.bindings.v, params.pair_map);
  st.bindings.h = objecthood(img, st.f, st.attn.back(), st.scope.back(), cfg, params);
  return st;
}

}  // namespace gvqa
