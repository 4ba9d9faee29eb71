#pragma once

#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "gvqa/dsl.hpp"
#include "gvqa/model.hpp"

namespace gvqa {

// Adam with the second moment replaced by the belief in the gradient:
// s_t = beta2 * s_{t-1} + (1 - beta2) * (g_t - m_t)^2 + eps, both moments
// bias-corrected. Moment buffers are kept here, aligned with the parameter
// list order on first use.
struct AdaBelief {
  double lr = 4e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t steps = 0;
  std::vector<std::vector<double>> m, s;

  void step(ParamList& params);
};

// One curriculum stage: which scenes qualify (by object count), which
// question families, and how long a program may be (0 = no cap). A stage
// ends when its training accuracy beats the advancement threshold or its
// epoch cap is reached.
struct StageSpec {
  std::string name;
  int max_objects = 0;    // 0 = unlimited
  int max_parse_len = 0;  // 0 = unlimited
  std::set<Family> families;
  int epoch_cap = 0;
};

// Small scenes and short single-set questions first; all scene sizes next;
// then spatial and same-attribute relations; finally count comparisons and
// pairwise attribute equality alongside everything else.
std::vector<StageSpec> default_curriculum(int epoch_cap);

struct TrainExample {
  int scene_index = 0;  // into Corpus::scenes
  Program program;
  Answer answer;
};

struct Corpus {
  std::vector<Scene> scenes;
  std::vector<TrainExample> examples;
};

// Reads the scene and question files written by the data generator and
// resolves scene ids to indices. Throws on an unknown scene id.
Corpus load_corpus(const std::string& scenes_path, const std::string& questions_path);

struct TrainConfig {
  int batch = 24;
  double lr = 4e-5;
  double clip_norm = 0.0;  // 0 disables global-norm gradient clipping
  bool curriculum = true;
  int stage_epoch_cap = 12;
  double advance_accuracy = 0.95;
  int single_stage_epochs = 30;  // epoch cap when curriculum == false
  uint64_t seed = 1;
  std::string metrics_path;     // optional line-delimited epoch records
  std::string checkpoint_path;  // optional; written after every stage
  std::function<void(const std::string&)> log;  // optional progress sink
};

struct EpochMetrics {
  int epoch = 0;  // global, 1-based
  int stage = 0;  // 1-based
  double loss = 0.0;
  double accuracy = 0.0;
  int examples = 0;
};

struct TrainResult {
  std::vector<EpochMetrics> log;
  bool aborted = false;
  std::string abort_reason;
};

// Runs the curriculum (or a single stage over everything), optimizing all
// parameters from the answer loss alone. Scene graphs are never consulted;
// gold answers enter only through the loss on the final answer.
TrainResult train(Model& model, const Corpus& corpus, const TrainConfig& tc);

}  // namespace gvqa
