#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>

#include "gvqa/datagen.hpp"
#include "gvqa/model.hpp"
#include "gvqa/training.hpp"

namespace gvqa {

// A bad invocation (as opposed to a failure while carrying out a good one);
// the command line maps it to its own exit code.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flat key=value text, '#' starts a comment, blank lines ignored. Keys are
// dotted paths matching the checkpoint header vocabulary (grounding.n,
// render.l, train.lr, ...). Duplicate keys are an error: every reported
// number should trace to exactly one line.
class KvConfig {
 public:
  static KvConfig from_file(const std::string& path);
  static KvConfig from_string(const std::string& text);

  bool has(const std::string& key) const;
  void set(const std::string& key, const std::string& value);

  std::string get_str(const std::string& key) const;  // throws UsageError if absent
  std::string get_str(const std::string& key, const std::string& fallback) const;
  int64_t get_int(const std::string& key, int64_t fallback) const;
  uint64_t get_uint(const std::string& key) const;
  double get_num(const std::string& key, double fallback) const;
  bool get_flag(const std::string& key, bool fallback) const;

  const std::map<std::string, std::string>& entries() const { return entries_; }

  // Throws UsageError listing every key outside the known set (typo guard).
  void require_known(const std::set<std::string>& known) const;

 private:
  std::map<std::string, std::string> entries_;
};

// Everything one experiment needs, assembled from a config file plus flag
// overrides. The variant name alone decides scope mode, initialization, and
// scope ablation; a config cannot override those pieces directly.
struct Experiment {
  uint64_t seed = 0;
  std::string variant = "parallel";
  std::string task = "standard";
  std::string data_dir;  // defaults to data/<task>
  std::string run_dir;   // optional; commands that need it say so
  ModelConfig model;
  DataGenConfig data;
  TrainConfig trainer;  // paths left empty; the command fills them in
  std::string resume;   // optional checkpoint to continue training from
};

Experiment experiment_from(const KvConfig& kv);

// Differences between a checkpoint's stored shape-bearing configuration and
// the experiment's, one "name: checkpoint=x config=y" clause per field;
// empty when compatible.
std::string config_mismatch(const ModelConfig& checkpoint, const ModelConfig& expected);

}  // namespace gvqa
