#pragma once

#include <cstdint>
#include <functional>
#include <random>

#include "hoi/pipeline.hpp"

namespace hoi {

struct SgdConfig {
    double learning_rate = 0.001;
    double momentum = 0.9;
    double weight_decay = 0.0001;

    void validate() const;
};

/// v <- m*v - lr*(g + wd*p); p <- p + v.
template <typename T>
void sgd_step(Tensor<T>& param, const Tensor<T>& grad, Tensor<T>& velocity, const SgdConfig& cfg);

/// Mean binary cross-entropy with a 1e-7 clamp inside the logs.
template <typename T>
T bce_loss(const Tensor<T>& scores, const Tensor<T>& labels);

template <typename T>
Tensor<T> bce_loss_backward(const Tensor<T>& scores, const Tensor<T>& labels);

/// Xavier-uniform kernel in +-sqrt(6 / (fan_in + fan_out)), zero bias.
template <typename T>
ConvWeights<T> init_conv(std::mt19937& rng, int kh, int kw, int c_in, int c_out);

ModelWeights<float> init_model(const ModelConfig& cfg, int feature_channels, std::mt19937& rng);
ToyBackboneWeights<float> init_toy_backbone(std::mt19937& rng, int mid_channels, int out_channels);

/// Desk-scale configuration for the synthetic task: 4 actions over 8-channel
/// stride-4 toy-backbone features.
ModelConfig toy_model_config();

/// Blobs on a blank canvas. Action 0 fires when the object sits beside the
/// human (disjoint, gap <= 4 px), action 1 when the boxes overlap; all other
/// actions are negative. The geometry is invisible to the appearance streams,
/// so the pairwise stream is required to solve the task.
struct SyntheticScene {
    TensorF image;  // [64, 64, 3]
    std::vector<InstanceDetection> detections;  // one human, then the objects
    std::vector<TensorF> pair_labels;           // per object: [n_actions] multi-hot
    TensorF agent_labels;                       // [n_actions], all zero under the rule
    int planted_object = -1;                    // index of the interacting object
};

SyntheticScene make_synthetic_scene(std::mt19937& rng, int n_actions, int n_objects);

/// The generative labeling rule, exposed so tests can check consistency.
TensorF synthetic_pair_label(const BBox& human, const BBox& object, int n_actions);

struct TrainToyResult {
    ModelConfig config;
    ToyBackboneWeights<float> backbone;  // frozen during training
    ModelWeights<float> model;
    std::vector<double> losses;  // per-step loss, before the update
};

TrainToyResult train_toy(std::uint64_t seed, int steps, const SgdConfig& sgd = {});

/// Scores fresh scenes with the trained model and counts how often the
/// planted pair outranks every distractor pair.
struct RankingEval {
    int scenes = 0;
    int planted_first = 0;
};

RankingEval rank_planted_pairs(const TrainToyResult& trained, std::uint64_t seed, int n_scenes);

// Finite-difference gradient checking. Forward evaluations report a
// signature of their discrete decisions (ReLU masks, max-pool and ROI-align
// argmax choices); a coordinate whose +-h evaluations disagree on the
// signature straddles a kink and is skipped.
struct FdEval {
    double loss = 0;
    std::uint64_t signature = 0;
};

struct SignatureHash {
    std::uint64_t h = 1469598103934665603ull;

    void add(std::uint64_t v) {
        h ^= v;
        h *= 1099511628211ull;
    }
    template <typename T>
    void add_relu_mask(const Tensor<T>& pre) {
        for (std::int64_t i = 0; i < pre.size(); ++i) add(pre[i] > T(0) ? 1u : 0u);
    }
    void add_indices(const std::vector<std::int64_t>& idx) {
        for (auto v : idx) add(static_cast<std::uint64_t>(v));
    }
    void add_indices(const std::vector<int>& idx) {
        for (auto v : idx) add(static_cast<std::uint64_t>(static_cast<std::uint32_t>(v)));
    }
};

struct FdBlock {
    std::string name;
    std::vector<TensorD*> params;
    std::function<FdEval()> eval;
    std::function<std::vector<TensorD>()> analytic;  // gradients aligned with params
    int max_coords_per_tensor = 24;
};

struct FdBlockResult {
    double max_rel_err = 0;
    int checked = 0;
    int skipped = 0;
};

FdBlockResult fd_check_block(FdBlock& block, std::mt19937& rng, double step = 1e-5);

struct GradCheckBlockReport {
    std::string name;
    double max_rel_err = 0;
    int checked = 0;
    int skipped = 0;
    bool pass = false;
};

struct GradCheckReport {
    std::vector<GradCheckBlockReport> blocks;
    double tolerance = 1e-4;
    bool all_pass = false;
};

/// Checks every differentiable block (context aggregation, local encoding
/// chain, the full attention chain, both heads, the pairwise net, the toy
/// backbone) against 64-bit central finite differences.
GradCheckReport gradcheck_all(std::uint64_t seed, double tolerance = 1e-4);

std::string gradcheck_report_to_json(const GradCheckReport& report);

}  // namespace hoi
