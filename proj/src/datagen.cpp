#include "gvqa/datagen.hpp"

#include <filesystem>
#include <sstream>
#include <stdexcept>

#include "gvqa/rng.hpp"

namespace gvqa {

namespace {

const std::set<Family> kAllFamilies = {
    Family::Query,      Family::Count,      Family::Exists,  Family::CountCompare,
    Family::QueryAttEq, Family::RelateHop,  Family::SameAttr};

Family family_from_name(const std::string& name) {
  for (Family f : kAllFamilies) {
    if (family_name(f) == name) return f;
  }
  throw std::invalid_argument("unknown question family '" + name + "'");
}

// Salt spaces for per-scene seeds; splits stay disjoint as long as a split
// holds fewer than 0x100000 scenes.
uint64_t scene_salt(const std::string& split, int i) {
  return (split == "train" ? 0x100000u : 0x200000u) + static_cast<uint64_t>(i);
}
uint64_t question_salt(const std::string& split, int i) {
  return (split == "train" ? 0x300000u : 0x400000u) + static_cast<uint64_t>(i);
}

}  // namespace

std::set<Family> family_set(const std::string& spec) {
  if (spec.empty() || spec == "all") return kAllFamilies;
  if (spec == "zero_hop") {
    std::set<Family> out = kAllFamilies;
    out.erase(Family::RelateHop);
    return out;
  }
  std::set<Family> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    size_t a = item.find_first_not_of(" \t");
    size_t b = item.find_last_not_of(" \t");
    if (a == std::string::npos) continue;
    out.insert(family_from_name(item.substr(a, b - a + 1)));
  }
  if (out.empty()) throw std::invalid_argument("empty family list '" + spec + "'");
  return out;
}

SplitData make_split(const DataGenConfig& cfg, const std::string& split) {
  if (split != "train" && split != "val")
    throw std::invalid_argument("unknown split '" + split + "'");
  if (cfg.task != "standard" && cfg.task != "ignore_red" && cfg.task != "group_cubes")
    throw std::invalid_argument("unknown task '" + cfg.task + "'");

  int count = split == "train" ? cfg.train_scenes : cfg.val_scenes;
  std::set<Family> families = cfg.families.empty() ? kAllFamilies : cfg.families;
  bool ban_red = cfg.task == "ignore_red";

  SplitData out;
  out.scenes.reserve(count);
  for (int i = 0; i < count; ++i) {
    Scene scene = generate_scene(Rng::mix(cfg.seed, scene_salt(split, i)),
                                 cfg.max_objects, cfg.render);
    scene.id = i;

    SceneGraph graph = scene_graph(scene);
    if (cfg.task == "ignore_red") graph = transform_ignore_red(graph);
    if (cfg.task == "group_cubes") graph = transform_group_cubes(graph);

    // Generating against the (possibly transformed) graph both labels the
    // questions by the task's semantics and filters out programs the task
    // leaves unanswerable.
    std::vector<QA> qs =
        generate_questions(graph, Rng::mix(cfg.seed, question_salt(split, i)),
                           families, cfg.questions_per_scene, ban_red,
                           /*quiet=*/true);
    for (QA& qa : qs)
      out.questions.push_back(QuestionRecord{scene.id, qa.program, qa.answer});
    out.scenes.push_back(std::move(scene));
  }
  return out;
}

std::string scenes_filename(const std::string& split) { return split + "_scenes.jsonl"; }
std::string questions_filename(const std::string& split) { return split + "_questions.tsv"; }

std::string write_corpus(const DataGenConfig& cfg, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::ostringstream summary;
  for (const std::string split : {"train", "val"}) {
    SplitData data = make_split(cfg, split);
    std::filesystem::path dir(out_dir);
    save_scenes((dir / scenes_filename(split)).string(), data.scenes);
    save_questions((dir / questions_filename(split)).string(), data.questions);
    summary << split << ": " << data.scenes.size() << " scenes, "
            << data.questions.size() << " questions\n";
  }
  return summary.str();
}

}  // namespace gvqa
