#include "gvqa/model.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace gvqa {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

void Model::init(uint64_t seed) {
  cfg.grounding.validate();
  Rng rng(seed);
  grounding.init(rng, cfg.render.channels(), cfg.grounding);
  semantics.init(rng, cfg.render.channels(), cfg.d_attr, cfg.grounding.d_pair);
}

ParamList Model::parameters() const {
  ParamList out;
  grounding.collect(out);
  semantics.collect(out);
  return out;
}

GroundingState Model::ground_scene(const Scene& scene, Rng& rng) const {
  Tensor img = render(scene, cfg.render);
  return ground(img, cfg.grounding, grounding, rng);
}

namespace {

const char* kMagic = "gvqa-checkpoint";
const int kVersion = 1;

std::map<std::string, std::string> config_lines(const ModelConfig& c) {
  std::map<std::string, std::string> kv;
  auto put = [&](const std::string& k, auto v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    kv[k] = os.str();
  };
  put("grounding.n", c.grounding.n);
  put("grounding.steps", c.grounding.steps);
  kv["grounding.mode"] = scope_mode_name(c.grounding.mode);
  kv["grounding.init"] = init_mode_name(c.grounding.init);
  put("grounding.use_scope", c.grounding.use_scope ? 1 : 0);
  put("grounding.gaussian_std", c.grounding.gaussian_std);
  put("grounding.hidden", c.grounding.hidden);
  put("grounding.d_pair", c.grounding.d_pair);
  put("render.l", c.render.l);
  put("render.w", c.render.w);
  put("render.sig_channels", c.render.sig_channels);
  put("render.signature_seed", c.render.signature_seed);
  put("render.blob_std", c.render.blob_std);
  put("render.noise_std", c.render.noise_std);
  put("d_attr", c.d_attr);
  return kv;
}

ModelConfig config_from_lines(const std::map<std::string, std::string>& kv) {
  ModelConfig c;
  auto want = [&](const std::string& k) -> const std::string& {
    auto it = kv.find(k);
    if (it == kv.end())
      throw std::runtime_error("checkpoint: missing config key '" + k + "'");
    return it->second;
  };
  c.grounding.n = std::stoi(want("grounding.n"));
  c.grounding.steps = std::stoi(want("grounding.steps"));
  c.grounding.mode = scope_mode_from(want("grounding.mode"));
  c.grounding.init = init_mode_from(want("grounding.init"));
  c.grounding.use_scope = want("grounding.use_scope") != "0";
  c.grounding.gaussian_std = std::stod(want("grounding.gaussian_std"));
  c.grounding.hidden = std::stoi(want("grounding.hidden"));
  c.grounding.d_pair = std::stoi(want("grounding.d_pair"));
  c.render.l = std::stoi(want("render.l"));
  c.render.w = std::stoi(want("render.w"));
  c.render.sig_channels = std::stoi(want("render.sig_channels"));
  c.render.signature_seed = std::stoull(want("render.signature_seed"));
  c.render.blob_std = std::stod(want("render.blob_std"));
  c.render.noise_std = std::stod(want("render.noise_std"));
  c.d_attr = std::stoi(want("d_attr"));
  return c;
}

}  // namespace

void save_checkpoint(const std::string& path, Model& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  out << kMagic << " " << kVersion << "\n";
  for (const auto& [k, v] : config_lines(model.cfg))
    out << "config " << k << " " << v << "\n";
  ParamList params = model.parameters();
  for (const auto& [name, t] : params) {
    out << "param " << name;
    for (int d : t.shape()) out << " " << d;
    out << "\n";
  }
  out << "end\n";
  std::vector<float> buf;
  for (auto& [name, t] : params) {
    Tensor tensor = t;  // shares storage
    buf.resize(static_cast<size_t>(tensor.numel()));
    for (int i = 0; i < tensor.numel(); ++i) {
      buf[static_cast<size_t>(i)] = static_cast<float>(tensor.value_at(i));
      // Snap in memory too: the live model now agrees with the file exactly.
      tensor.data()[i] = static_cast<double>(buf[static_cast<size_t>(i)]);
    }
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("write failed for checkpoint '" + path + "'");
}

Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != std::string(kMagic) + " 1")
    throw std::runtime_error("checkpoint '" + path + "': bad or missing header");

  std::map<std::string, std::string> kv;
  std::vector<std::pair<std::string, Shape>> layout;
  while (std::getline(in, line)) {
    if (line == "end") break;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "config") {
      std::string k, v;
      ls >> k >> v;
      kv[k] = v;
    } else if (tag == "param") {
      std::string name;
      ls >> name;
      Shape s;
      for (int d; ls >> d;) s.push_back(d);
      layout.emplace_back(name, s);
    } else {
      throw std::runtime_error("checkpoint '" + path + "': unknown header line '" +
                               line + "'");
    }
  }
  if (line != "end")
    throw std::runtime_error("checkpoint '" + path + "': truncated header");

  Model model;
  model.cfg = config_from_lines(kv);
  model.init(0);  // establishes shapes; every value is overwritten below

  std::map<std::string, Tensor> by_name;
  for (auto& [name, t] : model.parameters()) by_name.emplace(name, t);
  if (by_name.size() != layout.size())
    throw std::runtime_error("checkpoint '" + path + "': has " +
                             std::to_string(layout.size()) + " parameters, model has " +
                             std::to_string(by_name.size()));

  std::vector<float> buf;
  for (const auto& [name, shape] : layout) {
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw std::runtime_error("checkpoint '" + path + "': unknown parameter '" +
                               name + "'");
    Tensor t = it->second;
    if (t.shape() != shape)
      throw std::runtime_error("checkpoint '" + path + "': parameter '" + name +
                               "' has shape " + shape_str(shape) + ", model expects " +
                               shape_str(t.shape()));
    buf.resize(static_cast<size_t>(t.numel()));
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in)
      throw std::runtime_error("checkpoint '" + path +
                               "': truncated data for parameter '" + name + "'");
    for (int i = 0; i < t.numel(); ++i)
      t.data()[i] = static_cast<double>(buf[static_cast<size_t>(i)]);
  }
  return model;
}

}  // namespace gvqa
