#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gvqa/model.hpp"
#include "gvqa/training.hpp"

namespace gvqa {

// ----- question accuracy -----

struct QaBreakdown {
  double overall = 0.0;
  int total = 0;
  int correct = 0;
  std::map<Family, int> family_total;
  std::map<Family, int> family_correct;

  double family_accuracy(Family f) const;
};

// Decides every question with the discrete decision rules (argmax / 0.5
// threshold / nearest integer) and scores exact answer matches. Each scene
// is grounded once and shared by its questions.
QaBreakdown qa_accuracy(Model& model, const Corpus& corpus, uint64_t seed);

// ----- scene-graph readout -----

// What the model claims about one scene: per-slot attention centroids and
// per-attribute concept decisions for every slot with objecthood above 0.5,
// plus the relation matrices over all slots.
struct SlotPrediction {
  int slot = 0;
  double row = 0.0, col = 0.0;              // attention centroid
  std::array<int, kNumAttrs> claims{};      // value index, -1 = no claim (null)
};

struct ScenePredictions {
  int slots = 0;
  std::vector<SlotPrediction> objects;            // slots with h > 0.5
  std::array<Tensor, kNumRels> rel;               // [slots, slots] each
};

ScenePredictions predict_scene(Model& model, const Scene& scene, Rng& rng);

struct PrCounts {
  int64_t att_tp = 0, att_pred = 0, att_gold = 0;
  int64_t rel_tp = 0, rel_pred = 0, rel_gold = 0;

  PrCounts& operator+=(const PrCounts& o);
};

// Greedy one-to-one matching of predicted objects to gold objects by
// centroid-to-center distance; unmatched predictions count against
// precision, unmatched gold against recall.
PrCounts pr_counts(const ScenePredictions& preds, const Scene& scene);

struct PrReport {
  double att_precision = 1.0, att_recall = 1.0;
  double rel_precision = 1.0, rel_recall = 1.0;
  // 0/0 ratios are reported as 1.0 with the corresponding flag set.
  bool att_precision_vacuous = false, att_recall_vacuous = false;
  bool rel_precision_vacuous = false, rel_recall_vacuous = false;
  PrCounts counts;
};

PrReport scene_graph_pr(Model& model, const std::vector<Scene>& scenes, uint64_t seed);

// ----- transformed-answer tasks -----

struct NoncanonicalReport {
  double all_accuracy = 0.0;
  int total = 0;
  // Target questions are those whose gold answer changed under the task's
  // graph transform. Absent when the target set is empty.
  std::optional<double> target_accuracy;
  int target_total = 0;
};

// `task` is "ignore_red" or "group_cubes"; corpus answers must already be
// the transformed ones (as written by the data generator).
NoncanonicalReport noncanonical_eval(Model& model, const Corpus& corpus,
                                     const std::string& task, uint64_t seed);

// ----- objecthood and attention statistics -----

// Number of slots with h > 0.5.
int objects_detected(const GroundingState& st);

// Fraction of scenes where the detected object count equals the true count.
double count_calibration(Model& model, const std::vector<Scene>& scenes, uint64_t seed);

// Sum of the final per-variable attentions within `radius` cells of any of
// the given centers (row, col), divided by the number of centers. Zero
// centers give zero.
double attention_mass_near(const GroundingState& st,
                           const std::vector<std::pair<int, int>>& centers,
                           double radius);

// ----- artifact output -----

// Writes grayscale images (pixel = round(255 * clamped map)) for every
// final-step attention map and scope, the foreground, and the clamped sum of
// attentions: var<i>.ppm, scope<i>.ppm, foreground.ppm, sum.ppm. Returns the
// written paths.
std::vector<std::string> export_attention(Model& model, const Scene& scene,
                                          const std::string& out_dir, uint64_t seed);

// Line-delimited key=value report file.
void save_report(const std::string& path,
                 const std::vector<std::pair<std::string, std::string>>& kv);

}  // namespace gvqa
