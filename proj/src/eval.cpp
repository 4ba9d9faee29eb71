#include "gvqa/eval.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "gvqa/oracle.hpp"
#include "gvqa/semantics.hpp"

namespace gvqa {

double QaBreakdown::family_accuracy(Family f) const {
  auto it = family_total.find(f);
  if (it == family_total.end() || it->second == 0) return 0.0;
  auto c = family_correct.find(f);
  return static_cast<double>(c == family_correct.end() ? 0 : c->second) / it->second;
}

QaBreakdown qa_accuracy(Model& model, const Corpus& corpus, uint64_t seed) {
  QaBreakdown out;
  Rng rng(seed);
  std::map<int, std::vector<int>> by_scene;
  for (size_t e = 0; e < corpus.examples.size(); ++e)
    by_scene[corpus.examples[e].scene_index].push_back(static_cast<int>(e));
  for (const auto& [scene_index, example_ids] : by_scene) {
    GroundingState st =
        model.ground_scene(corpus.scenes[static_cast<size_t>(scene_index)], rng);
    LearnedContext ctx(st.bindings, model.semantics);
    for (int e : example_ids) {
      const TrainExample& ex = corpus.examples[static_cast<size_t>(e)];
      const Family fam = family_of(ex.program);
      const bool ok = decide(execute(ex.program, ctx)) == ex.answer;
      ++out.total;
      ++out.family_total[fam];
      if (ok) {
        ++out.correct;
        ++out.family_correct[fam];
      }
    }
  }
  out.overall = out.total > 0 ? static_cast<double>(out.correct) / out.total : 0.0;
  return out;
}

ScenePredictions predict_scene(Model& model, const Scene& scene, Rng& rng) {
  ScenePredictions out;
  GroundingState st = model.ground_scene(scene, rng);
  LearnedContext ctx(st.bindings, model.semantics);
  out.slots = st.bindings.slots();
  const std::vector<Tensor>& attn = st.attn.back();
  const int l = model.cfg.render.l;
  const int w = model.cfg.render.w;

  std::array<Tensor, kNumAttrs> concept_m;
  for (int a = 0; a < kNumAttrs; ++a) concept_m[static_cast<size_t>(a)] = ctx.concept_matrix(a);
  for (int r = 0; r < kNumRels; ++r) out.rel[static_cast<size_t>(r)] = ctx.relation_matrix(r);

  for (int i = 0; i < out.slots; ++i) {
    if (st.bindings.h.value_at(i) <= 0.5) continue;
    SlotPrediction sp;
    sp.slot = i;
    double mass = 0.0, row_acc = 0.0, col_acc = 0.0;
    for (int r = 0; r < l; ++r)
      for (int c = 0; c < w; ++c) {
        const double v = attn[static_cast<size_t>(i)].value_at(r * w + c);
        mass += v;
        row_acc += v * r;
        col_acc += v * c;
      }
    sp.row = mass > 0.0 ? row_acc / mass : 0.5 * (l - 1);
    sp.col = mass > 0.0 ? col_acc / mass : 0.5 * (w - 1);
    for (int a = 0; a < kNumAttrs; ++a) {
      const Tensor& M = concept_m[static_cast<size_t>(a)];
      const int rows = M.dim(0);  // values + null
      int best = 0;
      for (int r = 1; r < rows; ++r)
        if (M.value_at(r * out.slots + i) > M.value_at(best * out.slots + i)) best = r;
      sp.claims[static_cast<size_t>(a)] = best == rows - 1 ? -1 : best;
    }
    out.objects.push_back(sp);
  }
  return out;
}

PrCounts& PrCounts::operator+=(const PrCounts& o) {
  att_tp += o.att_tp;
  att_pred += o.att_pred;
  att_gold += o.att_gold;
  rel_tp += o.rel_tp;
  rel_pred += o.rel_pred;
  rel_gold += o.rel_gold;
  return *this;
}

PrCounts pr_counts(const ScenePredictions& preds, const Scene& scene) {
  PrCounts out;
  const SceneGraph graph = scene_graph(scene);

  // Greedy one-to-one matching by centroid distance.
  std::vector<std::tuple<double, int, int>> edges;  // (dist, pred index, gold id)
  for (size_t k = 0; k < preds.objects.size(); ++k)
    for (const SceneObject& obj : scene.objects) {
      const double dr = preds.objects[k].row - obj.y;
      const double dc = preds.objects[k].col - obj.x;
      edges.emplace_back(std::sqrt(dr * dr + dc * dc), static_cast<int>(k), obj.id);
    }
  std::sort(edges.begin(), edges.end());
  std::map<int, int> pred_to_gold;
  std::set<int> gold_taken;
  for (const auto& [dist, k, gid] : edges) {
    if (pred_to_gold.count(k) || gold_taken.count(gid)) continue;
    pred_to_gold[k] = gid;
    gold_taken.insert(gid);
  }

  for (const auto& [gid, attrs] : graph.attributes)
    for (const auto& val : attrs)
      if (val.has_value()) ++out.att_gold;
  for (size_t k = 0; k < preds.objects.size(); ++k) {
    const SlotPrediction& sp = preds.objects[k];
    const auto matched = pred_to_gold.find(static_cast<int>(k));
    for (int a = 0; a < kNumAttrs; ++a) {
      const int claim = sp.claims[static_cast<size_t>(a)];
      if (claim < 0) continue;
      ++out.att_pred;
      if (matched == pred_to_gold.end()) continue;
      const auto& gold = graph.attributes.at(matched->second)[static_cast<size_t>(a)];
      if (gold.has_value() && *gold == claim) ++out.att_tp;
    }
  }

  for (int r = 0; r < kNumRels; ++r)
    out.rel_gold += static_cast<int64_t>(graph.relations[static_cast<size_t>(r)].size());
  for (int r = 0; r < kNumRels; ++r) {
    const Tensor& O = preds.rel[static_cast<size_t>(r)];
    for (size_t a = 0; a < preds.objects.size(); ++a)
      for (size_t b = 0; b < preds.objects.size(); ++b) {
        if (a == b) continue;
        const int sa = preds.objects[a].slot;
        const int sb = preds.objects[b].slot;
        if (O.value_at(sa * preds.slots + sb) <= 0.5) continue;
        ++out.rel_pred;
        const auto ga = pred_to_gold.find(static_cast<int>(a));
        const auto gb = pred_to_gold.find(static_cast<int>(b));
        if (ga == pred_to_gold.end() || gb == pred_to_gold.end()) continue;
        if (graph.relations[static_cast<size_t>(r)].count({ga->second, gb->second}))
          ++out.rel_tp;
      }
  }
  return out;
}

namespace {

double ratio_or_one(int64_t num, int64_t den, bool* vacuous) {
  if (den == 0) {
    *vacuous = true;
    return 1.0;
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

PrReport scene_graph_pr(Model& model, const std::vector<Scene>& scenes, uint64_t seed) {
  PrReport report;
  Rng rng(seed);
  for (const Scene& scene : scenes)
    report.counts += pr_counts(predict_scene(model, scene, rng), scene);
  report.att_precision =
      ratio_or_one(report.counts.att_tp, report.counts.att_pred, &report.att_precision_vacuous);
  report.att_recall =
      ratio_or_one(report.counts.att_tp, report.counts.att_gold, &report.att_recall_vacuous);
  report.rel_precision =
      ratio_or_one(report.counts.rel_tp, report.counts.rel_pred, &report.rel_precision_vacuous);
  report.rel_recall =
      ratio_or_one(report.counts.rel_tp, report.counts.rel_gold, &report.rel_recall_vacuous);
  return report;
}

NoncanonicalReport noncanonical_eval(Model& model, const Corpus& corpus,
                                     const std::string& task, uint64_t seed) {
  SceneGraph (*transform)(const SceneGraph&) = nullptr;
  if (task == "ignore_red") transform = transform_ignore_red;
  else if (task == "group_cubes") transform = transform_group_cubes;
  else throw std::invalid_argument("unknown task '" + task + "'");

  NoncanonicalReport out;
  Rng rng(seed);
  int correct_all = 0, correct_target = 0;
  std::map<int, std::vector<int>> by_scene;
  for (size_t e = 0; e < corpus.examples.size(); ++e)
    by_scene[corpus.examples[e].scene_index].push_back(static_cast<int>(e));
  for (const auto& [scene_index, example_ids] : by_scene) {
    const Scene& scene = corpus.scenes[static_cast<size_t>(scene_index)];
    const SceneGraph original = scene_graph(scene);
    const SceneGraph transformed = transform(original);
    GroundingState st = model.ground_scene(scene, rng);
    LearnedContext ctx(st.bindings, model.semantics);
    for (int e : example_ids) {
      const TrainExample& ex = corpus.examples[static_cast<size_t>(e)];
      const bool ok = decide(execute(ex.program, ctx)) == ex.answer;
      ++out.total;
      if (ok) ++correct_all;
      // A target question answers differently on the transformed graph (a
      // question the transform breaks outright counts as changed too).
      bool target;
      try {
        target =
            execute_symbolic(ex.program, original) != execute_symbolic(ex.program, transformed);
      } catch (const PresuppositionFailure&) {
        target = true;
      } catch (const UndefinedAttributeValue&) {
        target = true;
      }
      if (target) {
        ++out.target_total;
        if (ok) ++correct_target;
      }
    }
  }
  out.all_accuracy = out.total > 0 ? static_cast<double>(correct_all) / out.total : 0.0;
  if (out.target_total > 0)
    out.target_accuracy = static_cast<double>(correct_target) / out.target_total;
  return out;
}

int objects_detected(const GroundingState& st) {
  int n = 0;
  for (int i = 0; i < st.bindings.slots(); ++i)
    if (st.bindings.h.value_at(i) > 0.5) ++n;
  return n;
}

double count_calibration(Model& model, const std::vector<Scene>& scenes, uint64_t seed) {
  if (scenes.empty()) return 0.0;
  Rng rng(seed);
  int exact = 0;
  for (const Scene& scene : scenes) {
    GroundingState st = model.ground_scene(scene, rng);
    if (objects_detected(st) == static_cast<int>(scene.objects.size())) ++exact;
  }
  return static_cast<double>(exact) / static_cast<double>(scenes.size());
}

double attention_mass_near(const GroundingState& st,
                           const std::vector<std::pair<int, int>>& centers,
                           double radius) {
  if (centers.empty()) return 0.0;
  const std::vector<Tensor>& attn = st.attn.back();
  const int l = st.f.dim(0);
  const int w = st.f.dim(1);
  double mass = 0.0;
  for (int r = 0; r < l; ++r)
    for (int c = 0; c < w; ++c) {
      bool near = false;
      for (const auto& [cr, cc] : centers) {
        const double dr = r - cr, dc = c - cc;
        if (dr * dr + dc * dc <= radius * radius) {
          near = true;
          break;
        }
      }
      if (!near) continue;
      for (const Tensor& a : attn) mass += a.value_at(r * w + c);
    }
  return mass / static_cast<double>(centers.size());
}

namespace {

void write_ppm(const std::string& path, const Tensor& map) {
  const int l = map.dim(0);
  const int w = map.dim(1);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write image '" + path + "'");
  out << "P6\n" << w << " " << l << "\n255\n";
  for (int i = 0; i < l * w; ++i) {
    const double v = std::clamp(map.value_at(i), 0.0, 1.0);
    const unsigned char byte = static_cast<unsigned char>(std::lround(255.0 * v));
    const char px[3] = {static_cast<char>(byte), static_cast<char>(byte),
                        static_cast<char>(byte)};
    out.write(px, 3);
  }
  if (!out) throw std::runtime_error("write failed for image '" + path + "'");
}

}  // namespace

std::vector<std::string> export_attention(Model& model, const Scene& scene,
                                          const std::string& out_dir, uint64_t seed) {
  std::filesystem::create_directories(out_dir);
  Rng rng(seed);
  GroundingState st = model.ground_scene(scene, rng);
  std::vector<std::string> written;
  const std::vector<Tensor>& attn = st.attn.back();
  const std::vector<Tensor>& scope = st.scope.back();
  for (size_t i = 0; i < attn.size(); ++i) {
    std::string path = out_dir + "/var" + std::to_string(i) + ".ppm";
    write_ppm(path, attn[i]);
    written.push_back(path);
  }
  for (size_t i = 0; i < scope.size(); ++i) {
    std::string path = out_dir + "/scope" + std::to_string(i) + ".ppm";
    write_ppm(path, scope[i]);
    written.push_back(path);
  }
  write_ppm(out_dir + "/foreground.ppm", st.f);
  written.push_back(out_dir + "/foreground.ppm");
  Tensor total = attn[0];
  for (size_t i = 1; i < attn.size(); ++i) total = add(total, attn[i]);
  write_ppm(out_dir + "/sum.ppm", total);
  written.push_back(out_dir + "/sum.ppm");
  return written;
}

void save_report(const std::string& path,
                 const std::vector<std::pair<std::string, std::string>>& kv) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report '" + path + "'");
  for (const auto& [k, v] : kv) out << k << "=" << v << "\n";
  if (!out) throw std::runtime_error("write failed for report '" + path + "'");
}

}  // namespace gvqa
