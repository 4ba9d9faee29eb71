#include "gvqa/config.hpp"

#include <fstream>
#include <sstream>

#include "gvqa/grounding.hpp"

namespace gvqa {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

// Every key a config file may set. Anything else is a typo and gets
// rejected before it can silently change nothing.
const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "seed", "variant", "task", "data_dir", "run_dir",
      "grounding.n", "grounding.steps", "grounding.hidden", "grounding.d_pair",
      "grounding.gaussian_std",
      "render.l", "render.w", "render.sig_channels", "render.signature_seed",
      "render.blob_std", "render.noise_std",
      "d_attr",
      "data.train_scenes", "data.val_scenes", "data.questions_per_scene",
      "data.max_objects", "data.families",
      "train.batch", "train.lr", "train.clip_norm", "train.curriculum",
      "train.stage_epoch_cap", "train.advance_accuracy",
      "train.single_stage_epochs", "train.resume",
  };
  return keys;
}

}  // namespace

KvConfig KvConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return from_string(buf.str());
}

KvConfig KvConfig::from_string(const std::string& text) {
  KvConfig cfg;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError("config line " + std::to_string(lineno) +
                       ": expected key = value, got '" + line + "'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw UsageError("config line " + std::to_string(lineno) + ": empty key");
    if (cfg.entries_.count(key))
      throw UsageError("config line " + std::to_string(lineno) +
                       ": duplicate key '" + key + "'");
    cfg.entries_[key] = value;
  }
  return cfg;
}

bool KvConfig::has(const std::string& key) const { return entries_.count(key) > 0; }

void KvConfig::set(const std::string& key, const std::string& value) {
  entries_[key] = value;
}

std::string KvConfig::get_str(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw UsageError("config is missing required key '" + key + "'");
  return it->second;
}

std::string KvConfig::get_str(const std::string& key, const std::string& fallback) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second;
}

namespace {

// stoll/stod accept trailing junk; a config should not.
template <typename T, typename Parse>
T parse_all(const std::string& key, const std::string& text, Parse parse,
            const char* what) {
  size_t used = 0;
  T value{};
  try {
    value = parse(text, &used);
  } catch (const std::exception&) {
    throw UsageError("config key '" + key + "': cannot parse '" + text + "' as " + what);
  }
  if (used != text.size())
    throw UsageError("config key '" + key + "': cannot parse '" + text + "' as " + what);
  return value;
}

}  // namespace

int64_t KvConfig::get_int(const std::string& key, int64_t fallback) const {
  if (!has(key)) return fallback;
  return parse_all<int64_t>(
      key, get_str(key), [](const std::string& s, size_t* u) { return std::stoll(s, u); },
      "an integer");
}

uint64_t KvConfig::get_uint(const std::string& key) const {
  return parse_all<uint64_t>(
      key, get_str(key), [](const std::string& s, size_t* u) { return std::stoull(s, u); },
      "an unsigned integer");
}

double KvConfig::get_num(const std::string& key, double fallback) const {
  if (!has(key)) return fallback;
  return parse_all<double>(
      key, get_str(key), [](const std::string& s, size_t* u) { return std::stod(s, u); },
      "a number");
}

bool KvConfig::get_flag(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  std::string v = get_str(key);
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw UsageError("config key '" + key + "': cannot parse '" + v + "' as a flag");
}

void KvConfig::require_known(const std::set<std::string>& known) const {
  std::string bad;
  for (const auto& [k, v] : entries_)
    if (!known.count(k)) bad += (bad.empty() ? "" : ", ") + k;
  if (!bad.empty()) throw UsageError("unknown config keys: " + bad);
}

Experiment experiment_from(const KvConfig& kv) {
  kv.require_known(known_keys());

  Experiment e;
  e.seed = kv.get_uint("seed");  // mandatory: every run must be reproducible
  e.variant = kv.get_str("variant", "parallel");
  e.task = kv.get_str("task", "standard");
  if (e.task != "standard" && e.task != "ignore_red" && e.task != "group_cubes")
    throw UsageError("unknown task '" + e.task + "'");

  try {
    e.model.grounding = grounding_variant(e.variant);
  } catch (const std::invalid_argument& ex) {
    throw UsageError(ex.what());
  }
  e.model.grounding.n = static_cast<int>(kv.get_int("grounding.n", e.model.grounding.n));
  e.model.grounding.steps =
      static_cast<int>(kv.get_int("grounding.steps", e.model.grounding.steps));
  e.model.grounding.hidden =
      static_cast<int>(kv.get_int("grounding.hidden", e.model.grounding.hidden));
  e.model.grounding.d_pair =
      static_cast<int>(kv.get_int("grounding.d_pair", e.model.grounding.d_pair));
  e.model.grounding.gaussian_std =
      kv.get_num("grounding.gaussian_std", e.model.grounding.gaussian_std);

  e.model.render.l = static_cast<int>(kv.get_int("render.l", e.model.render.l));
  e.model.render.w = static_cast<int>(kv.get_int("render.w", e.model.render.w));
  e.model.render.sig_channels =
      static_cast<int>(kv.get_int("render.sig_channels", e.model.render.sig_channels));
  if (kv.has("render.signature_seed"))
    e.model.render.signature_seed = kv.get_uint("render.signature_seed");
  e.model.render.blob_std = kv.get_num("render.blob_std", e.model.render.blob_std);
  e.model.render.noise_std = kv.get_num("render.noise_std", e.model.render.noise_std);
  e.model.d_attr = static_cast<int>(kv.get_int("d_attr", e.model.d_attr));

  e.data.seed = e.seed;
  e.data.task = e.task;
  e.data.render = e.model.render;
  e.data.train_scenes =
      static_cast<int>(kv.get_int("data.train_scenes", e.data.train_scenes));
  e.data.val_scenes = static_cast<int>(kv.get_int("data.val_scenes", e.data.val_scenes));
  e.data.questions_per_scene = static_cast<int>(
      kv.get_int("data.questions_per_scene", e.data.questions_per_scene));
  e.data.max_objects =
      static_cast<int>(kv.get_int("data.max_objects", e.data.max_objects));
  try {
    e.data.families = family_set(kv.get_str("data.families", "all"));
  } catch (const std::invalid_argument& ex) {
    throw UsageError(ex.what());
  }

  e.trainer.batch = static_cast<int>(kv.get_int("train.batch", e.trainer.batch));
  e.trainer.lr = kv.get_num("train.lr", e.trainer.lr);
  e.trainer.clip_norm = kv.get_num("train.clip_norm", e.trainer.clip_norm);
  e.trainer.curriculum = kv.get_flag("train.curriculum", e.trainer.curriculum);
  e.trainer.stage_epoch_cap =
      static_cast<int>(kv.get_int("train.stage_epoch_cap", e.trainer.stage_epoch_cap));
  e.trainer.advance_accuracy =
      kv.get_num("train.advance_accuracy", e.trainer.advance_accuracy);
  e.trainer.single_stage_epochs = static_cast<int>(
      kv.get_int("train.single_stage_epochs", e.trainer.single_stage_epochs));
  e.trainer.seed = e.seed;

  e.data_dir = kv.get_str("data_dir", "data/" + e.task);
  e.run_dir = kv.get_str("run_dir", "");
  e.resume = kv.get_str("train.resume", "");
  return e;
}

std::string config_mismatch(const ModelConfig& ck, const ModelConfig& ex) {
  std::ostringstream out;
  auto diff = [&](const std::string& name, const std::string& a, const std::string& b) {
    if (a == b) return;
    if (out.tellp() > 0) out << "; ";
    out << name << ": checkpoint=" << a << " config=" << b;
  };
  auto num = [](auto v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  };
  diff("grounding.n", num(ck.grounding.n), num(ex.grounding.n));
  diff("grounding.steps", num(ck.grounding.steps), num(ex.grounding.steps));
  diff("grounding.mode", scope_mode_name(ck.grounding.mode),
       scope_mode_name(ex.grounding.mode));
  diff("grounding.init", init_mode_name(ck.grounding.init),
       init_mode_name(ex.grounding.init));
  diff("grounding.use_scope", num(ck.grounding.use_scope ? 1 : 0),
       num(ex.grounding.use_scope ? 1 : 0));
  diff("grounding.gaussian_std", num(ck.grounding.gaussian_std),
       num(ex.grounding.gaussian_std));
  diff("grounding.hidden", num(ck.grounding.hidden), num(ex.grounding.hidden));
  diff("grounding.d_pair", num(ck.grounding.d_pair), num(ex.grounding.d_pair));
  diff("render.l", num(ck.render.l), num(ex.render.l));
  diff("render.w", num(ck.render.w), num(ex.render.w));
  diff("render.sig_channels", num(ck.render.sig_channels), num(ex.render.sig_channels));
  diff("render.signature_seed", num(ck.render.signature_seed),
       num(ex.render.signature_seed));
  diff("render.blob_std", num(ck.render.blob_std), num(ex.render.blob_std));
  diff("render.noise_std", num(ck.render.noise_std), num(ex.render.noise_std));
  diff("d_attr", num(ck.d_attr), num(ex.d_attr));
  return out.str();
}

}  // namespace gvqa
