#pragma once

#include <string>

#include "gvqa/grounding.hpp"
#include "gvqa/scene.hpp"
#include "gvqa/semantics.hpp"

namespace gvqa {

// Everything needed to rebuild the parameter set from scratch: grounding
// architecture, renderer geometry, and the semantic embedding width. The
// executor's pair width always follows the grounding config.
struct ModelConfig {
  GroundingConfig grounding;
  RenderOptions render;
  int d_attr = 16;
};

// The trainable system: perception parameters plus executor parameters,
// tied together by the renderer's channel count and the pair width.
struct Model {
  ModelConfig cfg;
  GroundingParams grounding;
  SemanticParameters semantics;

  void init(uint64_t seed);
  // Named registry over both halves; tensors share storage with the model.
  ParamList parameters() const;
  // Render-and-ground convenience used by the trainer and the evaluators.
  GroundingState ground_scene(const Scene& scene, Rng& rng) const;
};

// Checkpoint layout: a text header (format version, config key/value lines,
// one line per parameter with its shape, then "end") followed by the raw
// little-endian float32 arrays in header order. Saving first snaps the
// in-memory doubles to float32, so a save -> load round trip reproduces the
// saved model's outputs bit for bit.
void save_checkpoint(const std::string& path, Model& model);
Model load_checkpoint(const std::string& path);

}  // namespace gvqa
