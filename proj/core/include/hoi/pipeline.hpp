#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hoi/attention.hpp"
#include "hoi/context_appearance.hpp"
#include "hoi/feature_io.hpp"

namespace hoi {

inline constexpr int kRoleDirectObject = 0;
inline constexpr int kRoleInstrument = 1;
inline constexpr int kRoleAgentOnly = 2;

/// One evaluated (action, role) category. object_class drives known-object
/// evaluation filtering; it is empty for agent-only slots.
struct ActionRoleSlot {
    int action_id = 0;
    int role_id = kRoleDirectObject;
    std::string name;
    std::optional<int> object_class;
};

struct ModelConfig {
    int n_actions = 26;
    int feature_channels = 2048;  // c_in of the backbone map
    int context_channels = 512;   // c_out of context aggregation
    int kernel_size = 7;          // k, factorized large kernel extent
    int embed_dim = 512;          // D, projection / f_app width
    int grid_size = 7;            // G
    int cell_channels = 8;        // E
    int se_reduction = 16;        // r
    int head_hidden = 512;        // D_h
    int roi_samples = 2;          // S, bilinear taps per axis per cell
    double human_thresh = 0.8;
    double object_thresh = 0.4;
    std::vector<ActionRoleSlot> roles;

    void validate() const;
    std::vector<ActionRoleSlot> paired_slots() const;
    std::vector<ActionRoleSlot> agent_slots() const;
};

ModelConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const ModelConfig& cfg);

/// Minimal net over the two-channel binary interaction pattern:
/// conv -> relu -> maxpool -> conv -> relu -> maxpool -> FC -> sigmoid.
template <typename T>
struct PairwiseWeights {
    ConvWeights<T> conv1;  // 5x5, 2 -> 16
    ConvWeights<T> conv2;  // 5x5, 16 -> 32
    ConvWeights<T> fc;     // flattened -> n_actions

    void validate() const;
};

inline constexpr int kPatternSize = 64;

/// Two-channel binary mask of the pair in its union-box frame: channel 0
/// marks the human box, channel 1 the object box. A cell is set when its
/// center falls inside the box.
template <typename T>
Tensor<T> interaction_pattern(const BBox& human, const BBox& object);

template <typename T>
struct PairwiseTrace {
    Tensor<T> pattern;
    Tensor<T> pre1, act1;
    MaxPoolResult<T> pool1;
    Tensor<T> pre2, act2;
    MaxPoolResult<T> pool2;
    Tensor<T> flat, logits, scores;
};

template <typename T>
PairwiseTrace<T> pairwise_stream(const Tensor<T>& pattern, const PairwiseWeights<T>& w);

template <typename T>
struct PairwiseGrads {
    Tensor<T> pattern;
    PairwiseWeights<T> weights;
};

template <typename T>
PairwiseGrads<T> pairwise_stream_backward(const PairwiseTrace<T>& trace, const PairwiseWeights<T>& w,
                                          const Tensor<T>& grad_scores);

/// Add-then-multiply fusion, normalized to a valid confidence:
/// out[a] = clamp(((s_h[a] + s_o[a]) / 2) * s_p[a], 0, 1).
template <typename T>
Tensor<T> fuse(const Tensor<T>& s_h, const Tensor<T>& s_o, const Tensor<T>& s_p);

template <typename T>
struct FuseGrads {
    Tensor<T> s_h, s_o, s_p;
};

template <typename T>
FuseGrads<T> fuse_backward(const Tensor<T>& s_h, const Tensor<T>& s_o, const Tensor<T>& s_p,
                           const Tensor<T>& grad_out);

/// One stream's learnable parameters (context aggregation, local encoding,
/// attention refinement and head). The human and object streams share this
/// architecture with independent weights.
template <typename T>
struct StreamWeights {
    ContextAggWeights<T> context;
    LocalEncodingWeights<T> local;
    AttentionWeights<T> attention;

    void validate() const;
};

template <typename T>
struct ModelWeights {
    ConvWeights<T> project;  // 1x1, c_in -> D; produces A, shared by both streams
    StreamWeights<T> human;
    StreamWeights<T> object;
    PairwiseWeights<T> pairwise;

    void validate() const;
    void validate_against(const ModelConfig& cfg, int feature_channels) const;
};

/// Per-image, per-stream precomputation: context aggregation and the 1x1
/// score conv run once and are shared by every box.
template <typename T>
struct StreamImageTrace {
    ContextAggTrace<T> ctx;
    Tensor<T> score_maps;
};

template <typename T>
StreamImageTrace<T> stream_image_forward(const Tensor<T>& features, const StreamWeights<T>& w);

/// Per-box forward through one stream given the image precomputation and the
/// shared projection A.
template <typename T>
struct StreamBoxTrace {
    LocalEncodingTrace<T> local;
    AttentionTrace<T> attn;
    HeadTrace<T> head;
};

template <typename T>
StreamBoxTrace<T> stream_box_forward(const StreamImageTrace<T>& image, const Tensor<T>& A,
                                     const BBox& box_feature_coords, const StreamWeights<T>& w);

/// Backward for one box: accumulates weight gradients plus the shared
/// d score_maps / d A buffers; the per-image closure runs in
/// stream_image_backward.
template <typename T>
void stream_box_backward(const StreamBoxTrace<T>& trace, const Tensor<T>& A, const StreamWeights<T>& w,
                         const Tensor<T>& grad_scores, Tensor<T>& grad_score_maps, Tensor<T>& grad_A,
                         StreamWeights<T>& grads);

template <typename T>
void stream_image_backward(const Tensor<T>& features, const StreamWeights<T>& w, const StreamImageTrace<T>& trace,
                           const Tensor<T>& grad_score_maps, StreamWeights<T>& grads);

template <typename T>
StreamWeights<T> stream_grads_like(const StreamWeights<T>& w);

template <typename T>
ModelWeights<T> model_grads_like(const ModelWeights<T>& w);

template <typename T>
PairwiseWeights<T> pairwise_grads_like(const PairwiseWeights<T>& w);

/// Enumerates every named parameter tensor (kernels and biases) of the model
/// in a stable order.
template <typename T>
void for_each_param(ModelWeights<T>& w, const std::function<void(const std::string&, Tensor<T>&)>& fn);

/// A scored <human, action, object> prediction. object is absent exactly for
/// agent-only roles.
struct HOITriplet {
    std::string image_id;
    BBox human;
    std::optional<BBox> object;
    int action_id = 0;
    int role_id = kRoleDirectObject;
    double score = 0;

    void validate(const std::string& who) const;
};

std::string detections_to_json(const std::vector<HOITriplet>& triplets);
std::vector<HOITriplet> detections_from_json_file(const std::filesystem::path& path);

struct AttentionMapExport {
    std::string image_id;
    DetKind kind = DetKind::Human;
    int box_index = 0;  // index among same-kind detections of the image
    TensorF attn_map;
    TensorF heatmap_norm;
};

/// Scores every (human, object) pair of the pre-filtered detections against
/// every (action, role) slot of the role table; agent-only actions are scored
/// from the human stream alone.
std::vector<HOITriplet> detect(const ImageFeatures& features, const std::vector<InstanceDetection>& detections,
                               const ModelWeights<float>& weights, const ModelConfig& cfg,
                               std::vector<AttentionMapExport>* attn_export = nullptr);

}  // namespace hoi
