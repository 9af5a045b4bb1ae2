#pragma once

#include <vector>

#include "hoi/feature_io.hpp"
#include "hoi/ops.hpp"
#include "hoi/tensor.hpp"

namespace hoi {

/// Factorized k x k kernel realized as two branches: A applies [k,1] then
/// [1,k], B applies [1,k] then [k,1]; the block output is their sum, with no
/// nonlinearity inside. Both branches map c_in -> c_mid -> c_out.
template <typename T>
struct ContextAggWeights {
    ConvWeights<T> a_col;  // [k, 1, c_in, c_mid]
    ConvWeights<T> a_row;  // [1, k, c_mid, c_out]
    ConvWeights<T> b_row;  // [1, k, c_in, c_mid]
    ConvWeights<T> b_col;  // [k, 1, c_mid, c_out]

    void validate() const;
    int kernel_extent() const { return std::max(a_col.kh(), a_row.kw()); }
};

template <typename T>
struct ContextAggTrace {
    Tensor<T> a_mid, a_out, b_mid, b_out, output;
};

template <typename T>
ContextAggTrace<T> context_aggregate(const Tensor<T>& features, const ContextAggWeights<T>& w);

template <typename T>
struct ContextAggGrads {
    Tensor<T> input;
    ContextAggWeights<T> weights;
};

template <typename T>
ContextAggGrads<T> context_aggregate_backward(const Tensor<T>& features, const ContextAggWeights<T>& w,
                                              const ContextAggTrace<T>& trace, const Tensor<T>& grad_out);

/// Position-sensitive ROI align. The box (feature coordinates) is split into
/// a grid x grid mesh; cell (i, j) reads only channel group
/// [(i*grid + j)*E, (i*grid + j + 1)*E) of the score maps. Each cell value is
/// the max over samples x samples bilinear taps; ties route the gradient to
/// the first maximal sample in scan order.
template <typename T>
struct PsRoiAlignResult {
    Tensor<T> output;  // [grid, grid, E]
    // Winning sample per output element, for the backward scatter and for
    // detecting argmax flips during finite-difference checks.
    std::vector<float> sample_x, sample_y;
    std::vector<int> sample_channel;
    std::vector<int> sample_index;  // sy * samples + sx within the cell
    BBox clamped_box;
    int grid = 0, samples = 0;
};

template <typename T>
PsRoiAlignResult<T> ps_roi_align(const Tensor<T>& score_maps, const BBox& box_feature_coords, int grid,
                                 int samples);

template <typename T>
Tensor<T> ps_roi_align_backward(const PsRoiAlignResult<T>& fwd, const std::vector<int>& score_map_dims,
                                const Tensor<T>& grad_out);

/// Edge-clamped bilinear read at continuous feature coordinates; cell (y, x)
/// holds its value at center (x + 0.5, y + 0.5).
template <typename T>
T bilinear_sample(const Tensor<T>& map, int channel, double x, double y);

/// 1x1 score conv -> PSRoIAlign -> flatten -> FC -> ReLU, producing the
/// contextual appearance vector for one box.
template <typename T>
struct LocalEncodingWeights {
    ConvWeights<T> score_conv;     // 1x1, c_out -> grid*grid*E
    ConvWeights<T> projection_fc;  // grid*grid*E -> D
    int grid = 0;
    int cell_channels = 0;  // E
    int samples = 2;        // bilinear taps per axis per cell

    void validate() const;
};

template <typename T>
struct AppearanceFeature {
    Tensor<T> f_app;  // [D], non-negative
    BBox source_box;  // image coordinates
    DetKind source_kind = DetKind::Object;
};

template <typename T>
struct LocalEncodingTrace {
    PsRoiAlignResult<T> roi;
    Tensor<T> flat, f_app_pre, f_app;
};

/// Per-box part of the local encoding, given the image's precomputed score
/// maps.
template <typename T>
LocalEncodingTrace<T> encode_box(const Tensor<T>& score_maps, const BBox& box_feature_coords,
                                 const LocalEncodingWeights<T>& w);

/// Gradient wrt score maps (accumulated into grad_score_maps) and the
/// projection weights; the score conv backward runs once per image, outside.
template <typename T>
void encode_box_backward(const LocalEncodingTrace<T>& trace, const LocalEncodingWeights<T>& w,
                         const Tensor<T>& grad_f_app, Tensor<T>& grad_score_maps,
                         LocalEncodingWeights<T>& grads);

/// Full per-box appearance extraction on an already context-aggregated map.
template <typename T>
AppearanceFeature<T> extract_appearance(const Tensor<T>& features_ctx, const BBox& box_image_coords,
                                        int spatial_stride, const LocalEncodingWeights<T>& w);

template <typename T>
LocalEncodingWeights<T> local_encoding_grads_like(const LocalEncodingWeights<T>& w);

}  // namespace hoi
