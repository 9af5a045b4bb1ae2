#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "hoi/pipeline.hpp"

namespace hoi {

inline constexpr int kWeightsFormatVersion = 1;

// Weights live in a directory of HOIT tensor files plus a names manifest
// `weights.json` mapping block names to file paths and expected shapes:
// {"format": 1, "tensors": {"<name>": {"file": "<name>.hoit", "shape": [..]}}}.

void save_weights_dir(const std::filesystem::path& dir,
                      const std::vector<std::pair<std::string, const TensorF*>>& named);

std::map<std::string, TensorF> load_weights_dir(const std::filesystem::path& dir);

std::vector<std::pair<std::string, TensorF*>> named_model_params(ModelWeights<float>& w);
std::vector<std::pair<std::string, TensorF*>> named_backbone_params(ToyBackboneWeights<float>& w);

/// Saves the model (and, when given, the toy backbone) plus `config.json`.
void save_model_dir(const std::filesystem::path& dir, const ModelConfig& cfg, ModelWeights<float>& model,
                    ToyBackboneWeights<float>* backbone = nullptr);

/// Zero-initialized weights with the exact shapes the config dictates.
ModelWeights<float> model_shapes_from_config(const ModelConfig& cfg, int feature_channels);

ModelWeights<float> load_model_dir(const std::filesystem::path& dir, const ModelConfig& cfg,
                                   int feature_channels);

bool weights_dir_has_backbone(const std::filesystem::path& dir);
ToyBackboneWeights<float> load_backbone_dir(const std::filesystem::path& dir);

/// 8-bit binary PGM, min-max normalized; for attention-map inspection.
void save_pgm(const std::filesystem::path& path, const TensorF& map);

}  // namespace hoi
