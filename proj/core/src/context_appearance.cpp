#include "hoi/context_appearance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace hoi {

template <typename T>
void ContextAggWeights<T>::validate() const {
    a_col.validate("context_aggregate a_col");
    a_row.validate("context_aggregate a_row");
    b_row.validate("context_aggregate b_row");
    b_col.validate("context_aggregate b_col");
    const int k = a_col.kh();
    if (a_col.kw() != 1 || a_row.kh() != 1 || a_row.kw() != k || b_row.kh() != 1 || b_row.kw() != k ||
        b_col.kw() != 1 || b_col.kh() != k) {
        throw ShapeError("context_aggregate: branches must factorize one k x k kernel; got a_col " +
                         a_col.kernel.shape_str() + ", a_row " + a_row.kernel.shape_str() + ", b_row " +
                         b_row.kernel.shape_str() + ", b_col " + b_col.kernel.shape_str());
    }
    if (a_col.c_in() != b_row.c_in() || a_row.c_out() != b_col.c_out() || a_col.c_out() != a_row.c_in() ||
        b_row.c_out() != b_col.c_in()) {
        throw ShapeError("context_aggregate: branch channel widths disagree");
    }
}

template <typename T>
ContextAggTrace<T> context_aggregate(const Tensor<T>& features, const ContextAggWeights<T>& w) {
    w.validate();
    if (features.rank() != 3 || features.dim(2) != w.a_col.c_in()) {
        throw ShapeError("context_aggregate: input " + features.shape_str() + " does not match kernel c_in " +
                         std::to_string(w.a_col.c_in()));
    }
    ContextAggTrace<T> t;
    t.a_mid = conv2d(features, w.a_col);
    t.a_out = conv2d(t.a_mid, w.a_row);
    t.b_mid = conv2d(features, w.b_row);
    t.b_out = conv2d(t.b_mid, w.b_col);
    t.output = add(t.a_out, t.b_out);
    return t;
}

template <typename T>
ContextAggGrads<T> context_aggregate_backward(const Tensor<T>& features, const ContextAggWeights<T>& w,
                                              const ContextAggTrace<T>& trace, const Tensor<T>& grad_out) {
    if (trace.output.empty()) throw ValidationError("context_aggregate_backward: called before forward");
    ContextAggGrads<T> g;
    auto ga2 = conv2d_backward(trace.a_mid, w.a_row, grad_out);
    auto ga1 = conv2d_backward(features, w.a_col, ga2.input);
    auto gb2 = conv2d_backward(trace.b_mid, w.b_col, grad_out);
    auto gb1 = conv2d_backward(features, w.b_row, gb2.input);
    g.input = add(ga1.input, gb1.input);
    g.weights.a_col = std::move(ga1.weights);
    g.weights.a_row = std::move(ga2.weights);
    g.weights.b_row = std::move(gb1.weights);
    g.weights.b_col = std::move(gb2.weights);
    return g;
}

template <typename T>
T bilinear_sample(const Tensor<T>& map, int channel, double x, double y) {
    const int h = map.dim(0), w = map.dim(1);
    double u = x - 0.5, v = y - 0.5;
    u = std::clamp(u, 0.0, static_cast<double>(w - 1));
    v = std::clamp(v, 0.0, static_cast<double>(h - 1));
    const int x0 = static_cast<int>(u);
    const int y0 = static_cast<int>(v);
    const int x1 = std::min(x0 + 1, w - 1);
    const int y1 = std::min(y0 + 1, h - 1);
    const double fx = u - x0, fy = v - y0;
    const double top = (1.0 - fx) * map(y0, x0, channel) + fx * map(y0, x1, channel);
    const double bot = (1.0 - fx) * map(y1, x0, channel) + fx * map(y1, x1, channel);
    return static_cast<T>((1.0 - fy) * top + fy * bot);
}

namespace {

BBox clamp_box(const BBox& b, int h, int w) {
    BBox c;
    c.x1 = std::clamp(b.x1, 0.0, static_cast<double>(w));
    c.x2 = std::clamp(b.x2, 0.0, static_cast<double>(w));
    c.y1 = std::clamp(b.y1, 0.0, static_cast<double>(h));
    c.y2 = std::clamp(b.y2, 0.0, static_cast<double>(h));
    return c;
}

}  // namespace

template <typename T>
PsRoiAlignResult<T> ps_roi_align(const Tensor<T>& score_maps, const BBox& box, int grid, int samples) {
    if (score_maps.rank() != 3) {
        throw ShapeError("ps_roi_align: score maps must be rank 3, got " + score_maps.shape_str());
    }
    if (grid < 1 || samples < 1) throw ShapeError("ps_roi_align: grid and samples must be >= 1");
    const int h = score_maps.dim(0), w = score_maps.dim(1), channels = score_maps.dim(2);
    if (channels % (grid * grid) != 0) {
        throw ShapeError("ps_roi_align: channel count " + std::to_string(channels) +
                         " is not divisible by grid*grid = " + std::to_string(grid * grid));
    }
    const int e = channels / (grid * grid);

    PsRoiAlignResult<T> r;
    r.grid = grid;
    r.samples = samples;
    r.clamped_box = clamp_box(box, h, w);
    if (r.clamped_box.width() * r.clamped_box.height() < 1.0) {
        throw ValidationError("ps_roi_align: degenerate ROI, box [" + std::to_string(box.x1) + ", " +
                              std::to_string(box.y1) + ", " + std::to_string(box.x2) + ", " +
                              std::to_string(box.y2) + "] covers less than one feature cell after clamping");
    }

    r.output = Tensor<T>({grid, grid, e});
    const auto n = static_cast<std::size_t>(r.output.size());
    r.sample_x.assign(n, 0);
    r.sample_y.assign(n, 0);
    r.sample_channel.assign(n, 0);
    r.sample_index.assign(n, 0);

    const double cell_w = r.clamped_box.width() / grid;
    const double cell_h = r.clamped_box.height() / grid;
    std::size_t oi = 0;
    for (int gy = 0; gy < grid; ++gy) {
        for (int gx = 0; gx < grid; ++gx) {
            const double ox = r.clamped_box.x1 + gx * cell_w;
            const double oy = r.clamped_box.y1 + gy * cell_h;
            const int group = (gy * grid + gx) * e;
            for (int ei = 0; ei < e; ++ei, ++oi) {
                const int channel = group + ei;
                T best = std::numeric_limits<T>::lowest();
                int best_s = 0;
                double best_x = 0, best_y = 0;
                for (int sy = 0; sy < samples; ++sy) {
                    const double py = oy + (sy + 0.5) * cell_h / samples;
                    for (int sx = 0; sx < samples; ++sx) {
                        const double px = ox + (sx + 0.5) * cell_w / samples;
                        const T v = bilinear_sample(score_maps, channel, px, py);
                        if (v > best) {
                            best = v;
                            best_s = sy * samples + sx;
                            best_x = px;
                            best_y = py;
                        }
                    }
                }
                r.output[static_cast<std::int64_t>(oi)] = best;
                r.sample_x[oi] = static_cast<float>(best_x);
                r.sample_y[oi] = static_cast<float>(best_y);
                r.sample_channel[oi] = channel;
                r.sample_index[oi] = best_s;
            }
        }
    }
    return r;
}

template <typename T>
Tensor<T> ps_roi_align_backward(const PsRoiAlignResult<T>& fwd, const std::vector<int>& score_map_dims,
                                const Tensor<T>& grad_out) {
    if (fwd.output.empty()) throw ValidationError("ps_roi_align_backward: called before forward");
    if (!grad_out.same_shape(fwd.output)) throw ShapeError("ps_roi_align_backward: gradient shape mismatch");
    Tensor<T> gx(score_map_dims);
    const int h = gx.dim(0), w = gx.dim(1);
    for (std::int64_t i = 0; i < grad_out.size(); ++i) {
        const auto ui = static_cast<std::size_t>(i);
        const int channel = fwd.sample_channel[ui];
        double u = fwd.sample_x[ui] - 0.5, v = fwd.sample_y[ui] - 0.5;
        u = std::clamp(u, 0.0, static_cast<double>(w - 1));
        v = std::clamp(v, 0.0, static_cast<double>(h - 1));
        const int x0 = static_cast<int>(u);
        const int y0 = static_cast<int>(v);
        const int x1 = std::min(x0 + 1, w - 1);
        const int y1 = std::min(y0 + 1, h - 1);
        const double fx = u - x0, fy = v - y0;
        const T g = grad_out[i];
        gx(y0, x0, channel) += static_cast<T>((1.0 - fy) * (1.0 - fx)) * g;
        gx(y0, x1, channel) += static_cast<T>((1.0 - fy) * fx) * g;
        gx(y1, x0, channel) += static_cast<T>(fy * (1.0 - fx)) * g;
        gx(y1, x1, channel) += static_cast<T>(fy * fx) * g;
    }
    return gx;
}

template <typename T>
void LocalEncodingWeights<T>::validate() const {
    score_conv.validate("local_encoding score_conv");
    projection_fc.validate("local_encoding projection_fc");
    if (grid < 1 || cell_channels < 1 || samples < 1) {
        throw ShapeError("local_encoding: grid, cell_channels and samples must be >= 1");
    }
    if (score_conv.kh() != 1 || score_conv.kw() != 1) {
        throw ShapeError("local_encoding: score_conv must be 1x1, got " + score_conv.kernel.shape_str());
    }
    if (score_conv.c_out() != grid * grid * cell_channels) {
        throw ShapeError("local_encoding: score_conv c_out " + std::to_string(score_conv.c_out()) +
                         " must equal grid*grid*E = " + std::to_string(grid * grid * cell_channels));
    }
    if (projection_fc.c_in() != grid * grid * cell_channels) {
        throw ShapeError("local_encoding: projection_fc input width " + std::to_string(projection_fc.c_in()) +
                         " must equal grid*grid*E");
    }
}

template <typename T>
LocalEncodingTrace<T> encode_box(const Tensor<T>& score_maps, const BBox& box_feature_coords,
                                 const LocalEncodingWeights<T>& w) {
    LocalEncodingTrace<T> t;
    t.roi = ps_roi_align(score_maps, box_feature_coords, w.grid, w.samples);
    t.flat = flatten(t.roi.output);
    t.f_app_pre = fully_connected(t.flat, w.projection_fc);
    t.f_app = relu(t.f_app_pre);
    return t;
}

template <typename T>
void encode_box_backward(const LocalEncodingTrace<T>& trace, const LocalEncodingWeights<T>& w,
                         const Tensor<T>& grad_f_app, Tensor<T>& grad_score_maps, LocalEncodingWeights<T>& grads) {
    if (trace.f_app.empty()) throw ValidationError("encode_box_backward: called before forward");
    const Tensor<T> d_pre = relu_backward(trace.f_app_pre, grad_f_app);
    auto gfc = fully_connected_backward(trace.flat, w.projection_fc, d_pre);
    accumulate(grads.projection_fc, gfc.weights);
    const Tensor<T> d_roi = reshape(gfc.input, trace.roi.output.dims());
    const Tensor<T> d_maps = ps_roi_align_backward(trace.roi, grad_score_maps.dims(), d_roi);
    for (std::int64_t i = 0; i < grad_score_maps.size(); ++i) grad_score_maps[i] += d_maps[i];
}

template <typename T>
AppearanceFeature<T> extract_appearance(const Tensor<T>& features_ctx, const BBox& box_image_coords,
                                        int spatial_stride, const LocalEncodingWeights<T>& w) {
    w.validate();
    const Tensor<T> score_maps = conv2d(features_ctx, w.score_conv);
    const BBox fbox = to_feature_coords(box_image_coords, spatial_stride);
    LocalEncodingTrace<T> t = encode_box(score_maps, fbox, w);
    return AppearanceFeature<T>{std::move(t.f_app), box_image_coords, DetKind::Object};
}

template <typename T>
LocalEncodingWeights<T> local_encoding_grads_like(const LocalEncodingWeights<T>& w) {
    LocalEncodingWeights<T> g;
    g.score_conv = zeros_like(w.score_conv);
    g.projection_fc = zeros_like(w.projection_fc);
    g.grid = w.grid;
    g.cell_channels = w.cell_channels;
    g.samples = w.samples;
    return g;
}

#define HOI_INSTANTIATE_CTX(T)                                                                            \
    template struct ContextAggWeights<T>;                                                                 \
    template struct LocalEncodingWeights<T>;                                                              \
    template ContextAggTrace<T> context_aggregate<T>(const Tensor<T>&, const ContextAggWeights<T>&);      \
    template ContextAggGrads<T> context_aggregate_backward<T>(const Tensor<T>&, const ContextAggWeights<T>&, \
                                                              const ContextAggTrace<T>&, const Tensor<T>&); \
    template T bilinear_sample<T>(const Tensor<T>&, int, double, double);                                 \
    template PsRoiAlignResult<T> ps_roi_align<T>(const Tensor<T>&, const BBox&, int, int);                \
    template Tensor<T> ps_roi_align_backward<T>(const PsRoiAlignResult<T>&, const std::vector<int>&,      \
                                                const Tensor<T>&);                                        \
    template LocalEncodingTrace<T> encode_box<T>(const Tensor<T>&, const BBox&,                           \
                                                 const LocalEncodingWeights<T>&);                         \
    template void encode_box_backward<T>(const LocalEncodingTrace<T>&, const LocalEncodingWeights<T>&,    \
                                         const Tensor<T>&, Tensor<T>&, LocalEncodingWeights<T>&);         \
    template AppearanceFeature<T> extract_appearance<T>(const Tensor<T>&, const BBox&, int,               \
                                                        const LocalEncodingWeights<T>&);                  \
    template LocalEncodingWeights<T> local_encoding_grads_like<T>(const LocalEncodingWeights<T>&);

HOI_INSTANTIATE_CTX(float)
HOI_INSTANTIATE_CTX(double)

#undef HOI_INSTANTIATE_CTX

}  // namespace hoi
