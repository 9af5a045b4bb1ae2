#include "hoi/attention.hpp"

namespace hoi {

namespace {
const std::vector<int> kSpatialAxes = {0, 1};
}

template <typename T>
void AttentionWeights<T>::validate() const {
    heatmap_conv.validate("attention heatmap_conv");
    se_reduce.validate("attention se_reduce");
    se_expand.validate("attention se_expand");
    head_fc1.validate("attention head_fc1");
    head_fc2.validate("attention head_fc2");
    const int d = heatmap_conv.c_in();
    if (heatmap_conv.c_out() != 1) {
        throw ShapeError("attention: heatmap_conv must map D -> 1, got " + heatmap_conv.kernel.shape_str());
    }
    if (se_reduce.c_in() != d || se_expand.c_out() != d || se_reduce.c_out() != se_expand.c_in()) {
        throw ShapeError("attention: SE widths disagree with D = " + std::to_string(d));
    }
    if (se_reduce.c_out() < 1) throw ShapeError("attention: SE bottleneck must be >= 1");
    if (head_fc1.c_in() != 2 * d) {
        throw ShapeError("attention: head input width " + std::to_string(head_fc1.c_in()) +
                         " must be 2D = " + std::to_string(2 * d));
    }
    if (head_fc1.c_out() != head_fc2.c_in()) {
        throw ShapeError("attention: head hidden widths disagree");
    }
}

template <typename T>
Tensor<T> project_features(const Tensor<T>& features, const ConvWeights<T>& project_conv) {
    if (project_conv.kh() != 1 || project_conv.kw() != 1) {
        throw ShapeError("project_features: projection must be 1x1, got " + project_conv.kernel.shape_str());
    }
    return conv2d(features, project_conv);
}

template <typename T>
void modulate(const Tensor<T>& f_app, const Tensor<T>& A, AttentionTrace<T>& trace) {
    if (A.rank() != 3 || f_app.rank() != 1 || f_app.dim(0) != A.dim(2)) {
        throw ShapeError("modulate: f_app " + f_app.shape_str() + " does not match A " + A.shape_str());
    }
    const int h = A.dim(0), w = A.dim(1), d = A.dim(2);
    trace.attn_logits = Tensor<T>({h, w});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const T* a = &A(y, x, 0);
            double dot = 0;
            for (int c = 0; c < d; ++c) dot += static_cast<double>(f_app(c)) * a[c];
            trace.attn_logits(y, x) = static_cast<T>(dot);
        }
    }
    trace.attn_map = softmax(trace.attn_logits, kSpatialAxes);
    trace.F_m = broadcast_mul(A, trace.attn_map);
}

template <typename T>
void spatial_refine(const ConvWeights<T>& heatmap_conv, AttentionTrace<T>& trace) {
    const Tensor<T>& fm = trace.F_m;
    const Tensor<T> h3 = conv2d(fm, heatmap_conv);  // [h, w, 1]
    trace.heatmap = reshape(h3, {fm.dim(0), fm.dim(1)});
    trace.heatmap_norm = softmax(trace.heatmap, kSpatialAxes);
    trace.S_att = broadcast_mul(fm, trace.heatmap_norm);
}

template <typename T>
void channel_refine(const ConvWeights<T>& se_reduce, const ConvWeights<T>& se_expand, AttentionTrace<T>& trace) {
    trace.z = global_average_pool(trace.F_m);
    trace.se_hidden_pre = fully_connected(trace.z, se_reduce);
    const Tensor<T> hidden = relu(trace.se_hidden_pre);
    trace.C_att = sigmoid(fully_connected(hidden, se_expand));
}

template <typename T>
void refine(AttentionTrace<T>& trace) {
    trace.F_r = broadcast_mul(trace.S_att, trace.C_att);
    trace.f_r = global_average_pool(trace.F_r);
}

template <typename T>
AttentionTrace<T> attention_forward(const Tensor<T>& f_app, const Tensor<T>& A, const AttentionWeights<T>& w) {
    AttentionTrace<T> trace;
    modulate(f_app, A, trace);
    spatial_refine(w.heatmap_conv, trace);
    channel_refine(w.se_reduce, w.se_expand, trace);
    refine(trace);
    return trace;
}

template <typename T>
AttentionGrads<T> attention_backward(const Tensor<T>& f_app, const Tensor<T>& A, const AttentionWeights<T>& w,
                                     const AttentionTrace<T>& trace, const Tensor<T>& grad_f_r,
                                     AttentionWeights<T>& grads) {
    if (trace.f_r.empty()) throw ValidationError("attention_backward: called before forward");
    const int h = A.dim(0), wd = A.dim(1);

    // refined features: channel gate applied to the spatially attended map
    const Tensor<T> d_Fr = global_average_pool_backward(grad_f_r, h, wd);
    auto g4 = broadcast_mul_backward(trace.S_att, trace.C_att, d_Fr);
    Tensor<T>& d_Satt = g4.map;
    const Tensor<T>& d_Catt = g4.factor;

    // squeeze-excitation channel gate
    const Tensor<T> d_se_logits = sigmoid_backward(trace.C_att, d_Catt);
    const Tensor<T> se_hidden = relu(trace.se_hidden_pre);
    auto g_expand = fully_connected_backward(se_hidden, w.se_expand, d_se_logits);
    accumulate(grads.se_expand, g_expand.weights);
    const Tensor<T> d_hidden_pre = relu_backward(trace.se_hidden_pre, g_expand.input);
    auto g_reduce = fully_connected_backward(trace.z, w.se_reduce, d_hidden_pre);
    accumulate(grads.se_reduce, g_reduce.weights);
    Tensor<T> d_Fm = global_average_pool_backward(g_reduce.input, h, wd);

    // spatial refinement heatmap
    auto g2 = broadcast_mul_backward(trace.F_m, trace.heatmap_norm, d_Satt);
    accumulate(d_Fm, g2.map);
    const Tensor<T> d_heat = softmax_backward(trace.heatmap_norm, g2.factor, kSpatialAxes);
    auto g_heatconv =
        conv2d_backward(trace.F_m, w.heatmap_conv, reshape(d_heat, {h, wd, 1}));
    accumulate(grads.heatmap_conv, g_heatconv.weights);
    accumulate(d_Fm, g_heatconv.input);

    // feature modulation
    auto g1 = broadcast_mul_backward(A, trace.attn_map, d_Fm);
    AttentionGrads<T> out;
    out.A = std::move(g1.map);
    const Tensor<T> d_logits = softmax_backward(trace.attn_map, g1.factor, kSpatialAxes);
    out.f_app = Tensor<T>(f_app.dims());
    const int d = A.dim(2);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < wd; ++x) {
            const T gl = d_logits(y, x);
            const T* a = &A(y, x, 0);
            T* ga = &out.A(y, x, 0);
            for (int c = 0; c < d; ++c) {
                out.f_app(c) += gl * a[c];
                ga[c] += gl * f_app(c);
            }
        }
    }
    return out;
}

template <typename T>
HeadTrace<T> action_head(const Tensor<T>& f_app, const Tensor<T>& f_r, const AttentionWeights<T>& w) {
    HeadTrace<T> t;
    t.x = concat(f_app, f_r);
    t.hidden_pre = fully_connected(t.x, w.head_fc1);
    const Tensor<T> hidden = relu(t.hidden_pre);
    t.logits = fully_connected(hidden, w.head_fc2);
    t.scores = sigmoid(t.logits);
    return t;
}

template <typename T>
HeadGrads<T> action_head_backward(const HeadTrace<T>& trace, const AttentionWeights<T>& w,
                                  const Tensor<T>& grad_scores, AttentionWeights<T>& grads) {
    if (trace.scores.empty()) throw ValidationError("action_head_backward: called before forward");
    const Tensor<T> d_logits = sigmoid_backward(trace.scores, grad_scores);
    const Tensor<T> hidden = relu(trace.hidden_pre);
    auto g2 = fully_connected_backward(hidden, w.head_fc2, d_logits);
    accumulate(grads.head_fc2, g2.weights);
    const Tensor<T> d_hidden_pre = relu_backward(trace.hidden_pre, g2.input);
    auto g1 = fully_connected_backward(trace.x, w.head_fc1, d_hidden_pre);
    accumulate(grads.head_fc1, g1.weights);
    const int d = trace.x.dim(0) / 2;
    auto [ga, gr] = concat_backward(d, d, g1.input);
    return HeadGrads<T>{std::move(ga), std::move(gr)};
}

template <typename T>
AttentionWeights<T> attention_grads_like(const AttentionWeights<T>& w) {
    AttentionWeights<T> g;
    g.heatmap_conv = zeros_like(w.heatmap_conv);
    g.se_reduce = zeros_like(w.se_reduce);
    g.se_expand = zeros_like(w.se_expand);
    g.head_fc1 = zeros_like(w.head_fc1);
    g.head_fc2 = zeros_like(w.head_fc2);
    return g;
}

#define HOI_INSTANTIATE_ATTN(T)                                                                             \
    template struct AttentionWeights<T>;                                                                    \
    template Tensor<T> project_features<T>(const Tensor<T>&, const ConvWeights<T>&);                        \
    template void modulate<T>(const Tensor<T>&, const Tensor<T>&, AttentionTrace<T>&);                      \
    template void spatial_refine<T>(const ConvWeights<T>&, AttentionTrace<T>&);                             \
    template void channel_refine<T>(const ConvWeights<T>&, const ConvWeights<T>&, AttentionTrace<T>&);      \
    template void refine<T>(AttentionTrace<T>&);                                                            \
    template AttentionTrace<T> attention_forward<T>(const Tensor<T>&, const Tensor<T>&,                     \
                                                    const AttentionWeights<T>&);                            \
    template AttentionGrads<T> attention_backward<T>(const Tensor<T>&, const Tensor<T>&,                    \
                                                     const AttentionWeights<T>&, const AttentionTrace<T>&,  \
                                                     const Tensor<T>&, AttentionWeights<T>&);               \
    template HeadTrace<T> action_head<T>(const Tensor<T>&, const Tensor<T>&, const AttentionWeights<T>&);   \
    template HeadGrads<T> action_head_backward<T>(const HeadTrace<T>&, const AttentionWeights<T>&,          \
                                                  const Tensor<T>&, AttentionWeights<T>&);                  \
    template AttentionWeights<T> attention_grads_like<T>(const AttentionWeights<T>&);

HOI_INSTANTIATE_ATTN(float)
HOI_INSTANTIATE_ATTN(double)

#undef HOI_INSTANTIATE_ATTN

}  // namespace hoi
