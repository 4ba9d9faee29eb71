#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "gvqa/config.hpp"
#include "gvqa/datagen.hpp"
#include "gvqa/eval.hpp"
#include "gvqa/training.hpp"

namespace fs = std::filesystem;
using namespace gvqa;

namespace {

// Flags shared by every subcommand; empty string = not given.
struct Flags {
  std::string config;
  std::string seed;
  std::string out;
  std::string variant;
  std::string task;
  bool force = false;
};

Experiment load_experiment(const Flags& fl, bool config_required = true) {
  KvConfig kv;
  if (!fl.config.empty())
    kv = KvConfig::from_file(fl.config);
  else if (config_required)
    throw UsageError("--config is required");
  if (!fl.seed.empty()) kv.set("seed", fl.seed);
  if (!fl.variant.empty()) kv.set("variant", fl.variant);
  if (!fl.task.empty()) kv.set("task", fl.task);
  return experiment_from(kv);
}

fs::path split_path(const std::string& data_dir, const std::string& split, bool scenes) {
  return fs::path(data_dir) / (scenes ? scenes_filename(split) : questions_filename(split));
}

Corpus load_split(const std::string& data_dir, const std::string& split) {
  fs::path scenes = split_path(data_dir, split, true);
  fs::path questions = split_path(data_dir, split, false);
  if (!fs::exists(scenes) || !fs::exists(questions))
    throw std::runtime_error("no " + split + " corpus under '" + data_dir +
                             "' (run gen-data first)");
  return load_corpus(scenes.string(), questions.string());
}

// Loads a checkpoint and insists it matches the experiment's model
// configuration, so a report can never silently describe the wrong model.
Model load_matching_checkpoint(const std::string& path, const Experiment& e) {
  if (!fs::exists(path)) throw std::runtime_error("no checkpoint at '" + path + "'");
  Model model = load_checkpoint(path);
  std::string mismatch = config_mismatch(model.cfg, e.model);
  if (!mismatch.empty())
    throw std::runtime_error("checkpoint '" + path +
                             "' does not match the config: " + mismatch);
  return model;
}

int cmd_gen_data(const Flags& fl) {
  Experiment e = load_experiment(fl);
  std::string out = fl.out.empty() ? e.data_dir : fl.out;
  if (fs::exists(out) && !fs::is_empty(out) && !fl.force)
    throw std::runtime_error("output directory '" + out +
                             "' is not empty; pass --force to overwrite");
  std::string summary = write_corpus(e.data, out);
  std::cout << "wrote corpus to " << out << "\n" << summary;
  return 0;
}

int cmd_train(const Flags& fl) {
  Experiment e = load_experiment(fl);
  std::string run_dir = fl.out.empty() ? e.run_dir : fl.out;
  if (run_dir.empty())
    throw UsageError("train needs an output directory: set run_dir in the config or pass --out");
  fs::create_directories(run_dir);

  Corpus corpus = load_split(e.data_dir, "train");

  Model model;
  if (!e.resume.empty()) {
    model = load_matching_checkpoint(e.resume, e);
    std::cout << "resuming from " << e.resume << "\n";
  } else {
    model.cfg = e.model;
    model.init(e.seed);
  }

  TrainConfig tc = e.trainer;
  tc.metrics_path = (fs::path(run_dir) / "metrics.txt").string();
  tc.checkpoint_path = (fs::path(run_dir) / "checkpoint.bin").string();
  tc.log = [](const std::string& line) { std::cout << line << "\n" << std::flush; };

  TrainResult res = train(model, corpus, tc);
  if (res.aborted) {
    std::cerr << "training aborted: " << res.abort_reason << "\n";
    return 2;
  }
  save_checkpoint(tc.checkpoint_path, model);
  std::cout << "checkpoint: " << tc.checkpoint_path << "\nmetrics: " << tc.metrics_path
            << "\n";
  return 0;
}

int cmd_eval(const Flags& fl, const std::string& checkpoint) {
  Experiment e = load_experiment(fl);
  Model model = load_matching_checkpoint(checkpoint, e);
  Corpus corpus = load_split(e.data_dir, "val");

  uint64_t seed = Rng::mix(e.seed, 0xE7A1);
  QaBreakdown qa = qa_accuracy(model, corpus, seed);
  PrReport pr = scene_graph_pr(model, corpus.scenes, Rng::mix(e.seed, 0xE7A2));
  double calibration = count_calibration(model, corpus.scenes, Rng::mix(e.seed, 0xE7A3));

  std::vector<std::pair<std::string, std::string>> report;
  auto put = [&](const std::string& k, double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    report.emplace_back(k, os.str());
  };
  report.emplace_back("task", e.task);
  report.emplace_back("variant", e.variant);
  report.emplace_back("checkpoint", checkpoint);
  put("qa_accuracy", qa.overall);
  put("qa_total", qa.total);
  for (const auto& [family, total] : qa.family_total) {
    put("qa_accuracy." + family_name(family), qa.family_accuracy(family));
    put("qa_total." + family_name(family), total);
  }
  put("attribute_precision", pr.att_precision);
  put("attribute_recall", pr.att_recall);
  put("relation_precision", pr.rel_precision);
  put("relation_recall", pr.rel_recall);
  put("attribute_precision_vacuous", pr.att_precision_vacuous ? 1 : 0);
  put("relation_precision_vacuous", pr.rel_precision_vacuous ? 1 : 0);
  put("count_calibration", calibration);
  if (e.task != "standard") {
    NoncanonicalReport nc = noncanonical_eval(model, corpus, e.task, seed);
    put("all_question_accuracy", nc.all_accuracy);
    if (nc.target_accuracy) {
      put("target_question_accuracy", *nc.target_accuracy);
      put("target_question_total", nc.target_total);
    }
  }

  for (const auto& [k, v] : report) std::cout << k << "=" << v << "\n";
  if (!fl.out.empty()) {
    save_report(fl.out, report);
    std::cout << "report: " << fl.out << "\n";
  }
  return 0;
}

int cmd_export_attention(const Flags& fl, const std::string& checkpoint, int scene_id) {
  Experiment e = load_experiment(fl);
  Model model = load_matching_checkpoint(checkpoint, e);
  Corpus corpus = load_split(e.data_dir, "val");

  const Scene* scene = nullptr;
  for (const Scene& s : corpus.scenes)
    if (s.id == scene_id) scene = &s;
  if (!scene)
    throw std::runtime_error("unknown scene id " + std::to_string(scene_id) +
                             " (validation split has " +
                             std::to_string(corpus.scenes.size()) + " scenes)");

  std::string out = fl.out.empty() ? "attention" : fl.out;
  std::vector<std::string> files =
      export_attention(model, *scene, out, Rng::mix(e.seed, 0xE7A4));
  for (const std::string& f : files) std::cout << f << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentiable visual question answering over synthetic scenes"};
  app.require_subcommand(1);

  Flags fl;
  // Shared flags are registered per-subcommand so `gvqa train --config ...`
  // and `gvqa --config ... train` both behave.
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", fl.config, "experiment config file (key = value lines)");
    cmd->add_option("--seed", fl.seed, "override the config seed");
    cmd->add_option("--out", fl.out, "output path (overrides the config)");
    cmd->add_option("--variant", fl.variant, "override the grounding variant");
    cmd->add_option("--task", fl.task, "override the task");
    cmd->add_flag("--force", fl.force, "overwrite existing outputs");
  };

  CLI::App* gen = app.add_subcommand("gen-data", "synthesize a train/validation corpus");
  add_common(gen);

  CLI::App* tr = app.add_subcommand("train", "train a model on a generated corpus");
  add_common(tr);

  std::string checkpoint;
  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint on the validation split");
  ev->add_option("checkpoint", checkpoint, "checkpoint file")->required();
  add_common(ev);

  int scene_id = 0;
  CLI::App* ex = app.add_subcommand("export-attention",
                                    "write a validation scene's attention maps as images");
  ex->add_option("checkpoint", checkpoint, "checkpoint file")->required();
  ex->add_option("scene-id", scene_id, "validation scene id")->required();
  add_common(ex);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints help or the parse error
    return e.get_exit_code() == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(fl);
    if (tr->parsed()) return cmd_train(fl);
    if (ev->parsed()) return cmd_eval(fl, checkpoint);
    if (ex->parsed()) return cmd_export_attention(fl, checkpoint, scene_id);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
