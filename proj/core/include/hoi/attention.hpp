#pragma once

#include "hoi/ops.hpp"
#include "hoi/tensor.hpp"

namespace hoi {

/// Per-stream attention parameters. The 1x1 projection that produces the
/// global map A lives at the model level (it is computed once per image and
/// shared by every box in both streams); everything downstream of A is
/// per-stream.
template <typename T>
struct AttentionWeights {
    ConvWeights<T> heatmap_conv;  // 1x1, D -> 1
    ConvWeights<T> se_reduce;     // D -> D/r
    ConvWeights<T> se_expand;     // D/r -> D
    ConvWeights<T> head_fc1;      // 2D -> D_h
    ConvWeights<T> head_fc2;      // D_h -> n_actions

    void validate() const;
    int embed_dim() const { return heatmap_conv.c_in(); }
};

template <typename T>
Tensor<T> project_features(const Tensor<T>& features, const ConvWeights<T>& project_conv);

/// Everything the attention chain computes for one box, kept for backward and
/// for attention-map export.
template <typename T>
struct AttentionTrace {
    Tensor<T> attn_logits;   // [h, w] dot(f_app, A[p])
    Tensor<T> attn_map;      // [h, w], softmax over positions, sums to 1
    Tensor<T> F_m;           // [h, w, D] attn_map-modulated A
    Tensor<T> heatmap;       // [h, w] pre-softmax H
    Tensor<T> heatmap_norm;  // [h, w], sums to 1
    Tensor<T> S_att;         // [h, w, D]
    Tensor<T> z;             // [D] squeezed descriptor
    Tensor<T> se_hidden_pre; // [D/r]
    Tensor<T> C_att;         // [D], strictly inside (0, 1)
    Tensor<T> F_r;           // [h, w, D]
    Tensor<T> f_r;           // [D]
};

/// Feature modulation: attn_map = softmax over positions of dot(f_app, A[p]);
/// F_m[p] = attn_map[p] * A[p].
template <typename T>
void modulate(const Tensor<T>& f_app, const Tensor<T>& A, AttentionTrace<T>& trace);

/// Spatial refinement: H = 1x1 conv(F_m); H_norm = spatial softmax(H);
/// S_att[p] = H_norm[p] * F_m[p].
template <typename T>
void spatial_refine(const ConvWeights<T>& heatmap_conv, AttentionTrace<T>& trace);

/// Channel gate: z = GAP(F_m); C_att = sigmoid(W1 relu(W2 z)).
template <typename T>
void channel_refine(const ConvWeights<T>& se_reduce, const ConvWeights<T>& se_expand, AttentionTrace<T>& trace);

/// Refined features: F_r[p][c] = S_att[p][c] * C_att[c]; f_r = GAP(F_r).
template <typename T>
void refine(AttentionTrace<T>& trace);

/// Runs the modulate-refine chain end to end.
template <typename T>
AttentionTrace<T> attention_forward(const Tensor<T>& f_app, const Tensor<T>& A, const AttentionWeights<T>& w);

template <typename T>
struct AttentionGrads {
    Tensor<T> f_app;
    Tensor<T> A;
};

/// Backward through the chain from d loss / d f_r. Weight gradients accumulate
/// into `grads`; returns gradients for the two inputs.
template <typename T>
AttentionGrads<T> attention_backward(const Tensor<T>& f_app, const Tensor<T>& A, const AttentionWeights<T>& w,
                                     const AttentionTrace<T>& trace, const Tensor<T>& grad_f_r,
                                     AttentionWeights<T>& grads);

template <typename T>
struct HeadTrace {
    Tensor<T> x;           // [2D] concat(f_app, f_r)
    Tensor<T> hidden_pre;  // [D_h]
    Tensor<T> logits;      // [n_actions]
    Tensor<T> scores;      // [n_actions], each strictly inside (0, 1)
};

/// Two FC layers on concat(f_app, f_r) with a per-action sigmoid.
template <typename T>
HeadTrace<T> action_head(const Tensor<T>& f_app, const Tensor<T>& f_r, const AttentionWeights<T>& w);

template <typename T>
struct HeadGrads {
    Tensor<T> f_app;
    Tensor<T> f_r;
};

template <typename T>
HeadGrads<T> action_head_backward(const HeadTrace<T>& trace, const AttentionWeights<T>& w,
                                  const Tensor<T>& grad_scores, AttentionWeights<T>& grads);

template <typename T>
AttentionWeights<T> attention_grads_like(const AttentionWeights<T>& w);

}  // namespace hoi
