#include "gvqa/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>

#include "gvqa/semantics.hpp"

namespace gvqa {

void AdaBelief::step(ParamList& params) {
  if (m.empty()) {
    m.resize(params.size());
    s.resize(params.size());
    for (size_t p = 0; p < params.size(); ++p) {
      m[p].assign(static_cast<size_t>(params[p].second.numel()), 0.0);
      s[p].assign(static_cast<size_t>(params[p].second.numel()), 0.0);
    }
  }
  if (m.size() != params.size())
    throw std::invalid_argument("optimizer state does not match parameter list");
  ++steps;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(steps));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(steps));
  for (size_t p = 0; p < params.size(); ++p) {
    Tensor t = params[p].second;
    double* mm = m[p].data();
    double* ss = s[p].data();
    const double* g = t.grad();
    double* w = t.data();
    for (int i = 0; i < t.numel(); ++i) {
      mm[i] = beta1 * mm[i] + (1.0 - beta1) * g[i];
      const double diff = g[i] - mm[i];
      ss[i] = beta2 * ss[i] + (1.0 - beta2) * diff * diff + eps;
      const double m_hat = mm[i] / c1;
      const double s_hat = ss[i] / c2;
      w[i] -= lr * m_hat / (std::sqrt(s_hat) + eps);
    }
  }
}

std::vector<StageSpec> default_curriculum(int epoch_cap) {
  const std::set<Family> simple = {Family::Query, Family::Count, Family::Exists};
  std::set<Family> with_relations = simple;
  with_relations.insert(Family::RelateHop);
  with_relations.insert(Family::SameAttr);
  std::set<Family> all = with_relations;
  all.insert(Family::CountCompare);
  all.insert(Family::QueryAttEq);
  return {
      StageSpec{"small-scenes-short", 3, 6, simple, epoch_cap},
      StageSpec{"all-scenes-simple", 0, 0, simple, epoch_cap},
      StageSpec{"relations", 0, 0, with_relations, epoch_cap},
      StageSpec{"everything", 0, 0, all, epoch_cap},
  };
}

Corpus load_corpus(const std::string& scenes_path, const std::string& questions_path) {
  Corpus corpus;
  corpus.scenes = load_scenes(scenes_path);
  std::map<int, int> index;
  for (size_t i = 0; i < corpus.scenes.size(); ++i)
    index[corpus.scenes[i].id] = static_cast<int>(i);
  for (const QuestionRecord& q : load_questions(questions_path)) {
    auto it = index.find(q.scene_id);
    if (it == index.end())
      throw std::runtime_error("question references unknown scene id " +
                               std::to_string(q.scene_id));
    corpus.examples.push_back({it->second, q.program, q.answer});
  }
  return corpus;
}

namespace {

double global_grad_norm(const ParamList& params) {
  double acc = 0.0;
  for (const auto& [name, t] : params)
    for (int i = 0; i < t.numel(); ++i) acc += t.grad()[i] * t.grad()[i];
  return std::sqrt(acc);
}

std::string grad_norm_dump(const ParamList& params) {
  std::ostringstream os;
  os << "gradient norms by parameter:";
  for (const auto& [name, t] : params) {
    double acc = 0.0;
    for (int i = 0; i < t.numel(); ++i) acc += t.grad()[i] * t.grad()[i];
    os << "\n  " << name << " " << std::sqrt(acc);
  }
  return os.str();
}

struct EpochOutcome {
  double loss = 0.0;
  double accuracy = 0.0;
  int examples = 0;
  long degenerate_definites = 0;
  bool nan = false;
  std::string diagnostics;
};

// One pass over the stage's examples: scene-grouped batches, one ground()
// per distinct scene per batch, one optimizer step per batch.
EpochOutcome run_epoch(Model& model, const Corpus& corpus,
                       const std::vector<int>& stage_examples, const TrainConfig& tc,
                       ParamList& params, AdaBelief& opt, Rng& rng) {
  EpochOutcome out;
  reset_degenerate_definite_count();

  // Group by scene, shuffle scene order and each scene's questions, then
  // flatten so batches mostly share scenes.
  std::map<int, std::vector<int>> by_scene;
  for (int e : stage_examples) by_scene[corpus.examples[static_cast<size_t>(e)].scene_index].push_back(e);
  std::vector<int> scene_order;
  for (const auto& [sc, qs] : by_scene) scene_order.push_back(sc);
  rng.shuffle(scene_order);
  std::vector<int> stream;
  for (int sc : scene_order) {
    std::vector<int>& qs = by_scene[sc];
    rng.shuffle(qs);
    stream.insert(stream.end(), qs.begin(), qs.end());
  }

  double loss_sum = 0.0;
  int correct = 0;
  for (size_t start = 0; start < stream.size(); start += static_cast<size_t>(tc.batch)) {
    const size_t stop = std::min(stream.size(), start + static_cast<size_t>(tc.batch));
    Tape tape;
    std::map<int, std::unique_ptr<LearnedContext>> contexts;
    Tensor batch_loss;
    for (size_t k = start; k < stop; ++k) {
      const TrainExample& ex = corpus.examples[static_cast<size_t>(stream[k])];
      auto ctx = contexts.find(ex.scene_index);
      if (ctx == contexts.end()) {
        GroundingState st =
            model.ground_scene(corpus.scenes[static_cast<size_t>(ex.scene_index)], rng);
        auto lc = std::make_unique<LearnedContext>(st.bindings, model.semantics);
        ctx = contexts.emplace(ex.scene_index, std::move(lc)).first;
      }
      ModelAnswer ma = execute(ex.program, *ctx->second);
      Tensor loss = answer_loss(ma, ex.answer);
      batch_loss = batch_loss.defined() ? add(batch_loss, loss) : loss;
      if (decide(ma) == ex.answer) ++correct;
    }
    const int batch_n = static_cast<int>(stop - start);
    Tensor mean_loss = scale_const(batch_loss, 1.0 / batch_n);
    const double loss_val = mean_loss.item();
    if (!std::isfinite(loss_val)) {
      // Report the gradients of the offending batch itself.
      for (auto& [name, t] : params) t.zero_grad();
      tape.backward(mean_loss);
      out.nan = true;
      out.diagnostics = "non-finite loss " + std::to_string(loss_val) + " at step " +
                        std::to_string(opt.steps + 1) + "\n" + grad_norm_dump(params);
      return out;
    }
    loss_sum += loss_val * batch_n;

    for (auto& [name, t] : params) t.zero_grad();
    tape.backward(mean_loss);
    if (tc.clip_norm > 0.0) {
      const double norm = global_grad_norm(params);
      if (norm > tc.clip_norm) {
        const double scale = tc.clip_norm / norm;
        for (auto& [name, t] : params)
          for (int i = 0; i < t.numel(); ++i) t.grad()[i] *= scale;
      }
    }
    opt.step(params);
  }

  out.examples = static_cast<int>(stream.size());
  out.loss = out.examples > 0 ? loss_sum / out.examples : 0.0;
  out.accuracy = out.examples > 0 ? static_cast<double>(correct) / out.examples : 0.0;
  out.degenerate_definites = degenerate_definite_count();
  return out;
}

}  // namespace

TrainResult train(Model& model, const Corpus& corpus, const TrainConfig& tc) {
  TrainResult result;
  if (tc.batch <= 0) throw std::invalid_argument("batch size must be positive");

  std::vector<StageSpec> stages;
  if (tc.curriculum) {
    stages = default_curriculum(tc.stage_epoch_cap);
  } else {
    std::set<Family> all = {Family::Query,       Family::Count,   Family::Exists,
                            Family::CountCompare, Family::QueryAttEq,
                            Family::RelateHop,   Family::SameAttr};
    stages = {StageSpec{"single-stage", 0, 0, all, tc.single_stage_epochs}};
  }

  ParamList params = model.parameters();
  AdaBelief opt;
  opt.lr = tc.lr;
  Rng rng(tc.seed);

  std::ofstream metrics;
  if (!tc.metrics_path.empty()) {
    metrics.open(tc.metrics_path);
    if (!metrics)
      throw std::runtime_error("cannot write metrics to '" + tc.metrics_path + "'");
  }
  auto say = [&](const std::string& msg) {
    if (tc.log) tc.log(msg);
  };

  int epoch = 0;
  for (size_t si = 0; si < stages.size(); ++si) {
    const StageSpec& stage = stages[si];
    std::vector<int> pool;
    for (size_t e = 0; e < corpus.examples.size(); ++e) {
      const TrainExample& ex = corpus.examples[e];
      const Scene& scene = corpus.scenes[static_cast<size_t>(ex.scene_index)];
      if (stage.max_objects > 0 &&
          static_cast<int>(scene.objects.size()) > stage.max_objects)
        continue;
      if (stage.max_parse_len > 0 && ex.program.length() > stage.max_parse_len) continue;
      if (!stage.families.count(family_of(ex.program))) continue;
      pool.push_back(static_cast<int>(e));
    }
    if (pool.empty()) {
      say("stage " + stage.name + ": no eligible examples, skipping");
      continue;
    }
    for (int stage_epoch = 0; stage_epoch < stage.epoch_cap; ++stage_epoch) {
      EpochOutcome eo = run_epoch(model, corpus, pool, tc, params, opt, rng);
      if (eo.nan) {
        result.aborted = true;
        result.abort_reason = eo.diagnostics;
        say("ABORT: " + eo.diagnostics);
        if (metrics) metrics << "abort reason=non-finite-loss\n";
        return result;
      }
      ++epoch;
      EpochMetrics em{epoch, static_cast<int>(si) + 1, eo.loss, eo.accuracy, eo.examples};
      result.log.push_back(em);
      std::ostringstream line;
      line.precision(6);
      line << "epoch=" << em.epoch << " stage=" << em.stage << " loss=" << em.loss
           << " accuracy=" << em.accuracy << " examples=" << em.examples;
      // Collapsed-extension warning: renormalizing a near-empty set yields a
      // near-zero "distribution" and a silent training pathology otherwise.
      if (eo.degenerate_definites > 0)
        line << " degenerate_definites=" << eo.degenerate_definites;
      if (metrics) metrics << line.str() << "\n" << std::flush;
      say(line.str() + " (" + stage.name + ")");
      if (eo.accuracy > tc.advance_accuracy) break;
    }
    if (!tc.checkpoint_path.empty()) save_checkpoint(tc.checkpoint_path, model);
  }
  return result;
}

}  // namespace gvqa
