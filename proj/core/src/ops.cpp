#include "hoi/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace hoi {

namespace {

struct SamePad {
    int out;    // output extent
    int begin;  // padding before the first input cell
};

SamePad same_pad(int in, int k, int stride) {
    const int out = (in + stride - 1) / stride;
    const int total = std::max((out - 1) * stride + k - in, 0);
    return {out, total / 2};
}

template <typename T>
void require_rank(const Tensor<T>& t, int rank, const char* who) {
    if (t.rank() != rank) {
        throw ShapeError(std::string(who) + ": expected rank " + std::to_string(rank) + " tensor, got " +
                         t.shape_str());
    }
}

// Iterates group decomposition for axis-set reductions: every element of
// `dims` belongs to a group formed by the non-axis dims. Returns per-element
// group ids and the number of groups.
std::pair<std::vector<std::int64_t>, std::int64_t> group_ids(const std::vector<int>& dims,
                                                             const std::vector<int>& axes) {
    const int rank = static_cast<int>(dims.size());
    std::vector<bool> is_axis(rank, false);
    for (int a : axes) is_axis[static_cast<std::size_t>(a)] = true;

    std::int64_t n = 1;
    for (int d : dims) n *= d;

    std::vector<std::int64_t> ids(static_cast<std::size_t>(n));
    std::vector<int> idx(static_cast<std::size_t>(rank), 0);
    std::int64_t groups = 1;
    for (int d = 0; d < rank; ++d) {
        if (!is_axis[static_cast<std::size_t>(d)]) groups *= dims[static_cast<std::size_t>(d)];
    }
    std::int64_t gid = 0;
    // Incremental mixed-radix counter; gid tracks the linear index over the
    // non-axis dims.
    std::vector<std::int64_t> gstride(static_cast<std::size_t>(rank), 0);
    std::int64_t s = 1;
    for (int d = rank - 1; d >= 0; --d) {
        if (!is_axis[static_cast<std::size_t>(d)]) {
            gstride[static_cast<std::size_t>(d)] = s;
            s *= dims[static_cast<std::size_t>(d)];
        }
    }
    for (std::int64_t i = 0; i < n; ++i) {
        ids[static_cast<std::size_t>(i)] = gid;
        for (int d = rank - 1; d >= 0; --d) {
            auto du = static_cast<std::size_t>(d);
            ++idx[du];
            gid += gstride[du];
            if (idx[du] < dims[du]) break;
            gid -= gstride[du] * dims[du];
            idx[du] = 0;
        }
    }
    return {std::move(ids), groups};
}

template <typename T>
void validate_axes(const Tensor<T>& t, const std::vector<int>& axes, const char* who) {
    if (axes.empty()) throw ShapeError(std::string(who) + ": empty axis set");
    std::vector<int> sorted = axes;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        if (sorted[i] < 0 || sorted[i] >= t.rank()) {
            throw ShapeError(std::string(who) + ": axis " + std::to_string(sorted[i]) + " out of range for " +
                             t.shape_str());
        }
        if (i > 0 && sorted[i] == sorted[i - 1]) {
            throw ShapeError(std::string(who) + ": duplicate axis " + std::to_string(sorted[i]));
        }
    }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const ConvWeights<T>& w, int stride) {
    require_rank(input, 3, "conv2d");
    w.validate("conv2d");
    if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
    const int h = input.dim(0), iw = input.dim(1), cin = input.dim(2);
    if (cin != w.c_in()) {
        throw ShapeError("conv2d: input channels " + std::to_string(cin) + " do not match kernel c_in " +
                         std::to_string(w.c_in()) + "; input " + input.shape_str() + ", kernel " +
                         w.kernel.shape_str());
    }
    const int kh = w.kh(), kw = w.kw(), cout = w.c_out();
    const auto [oh, pad_top] = same_pad(h, kh, stride);
    const auto [ow, pad_left] = same_pad(iw, kw, stride);

    Tensor<T> out({oh, ow, cout});
    const T* bias = w.bias.data();
    const T* kd = w.kernel.data();
    for (int oy = 0; oy < oh; ++oy) {
        const int iy0 = oy * stride - pad_top;
        for (int ox = 0; ox < ow; ++ox) {
            const int ix0 = ox * stride - pad_left;
            T* o = &out(oy, ox, 0);
            for (int co = 0; co < cout; ++co) o[co] = bias[co];
            for (int ky = 0; ky < kh; ++ky) {
                const int iy = iy0 + ky;
                if (iy < 0 || iy >= h) continue;
                for (int kx = 0; kx < kw; ++kx) {
                    const int ix = ix0 + kx;
                    if (ix < 0 || ix >= iw) continue;
                    const T* in = &input(iy, ix, 0);
                    const T* kp = kd + (static_cast<std::size_t>(ky) * kw + kx) * cin * cout;
                    for (int ci = 0; ci < cin; ++ci) {
                        const T v = in[ci];
                        const T* kc = kp + static_cast<std::size_t>(ci) * cout;
                        for (int co = 0; co < cout; ++co) o[co] += v * kc[co];
                    }
                }
            }
        }
    }
    return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const ConvWeights<T>& w, const Tensor<T>& grad_out,
                             int stride) {
    require_rank(input, 3, "conv2d_backward");
    require_rank(grad_out, 3, "conv2d_backward");
    const int h = input.dim(0), iw = input.dim(1), cin = input.dim(2);
    const int kh = w.kh(), kw = w.kw(), cout = w.c_out();
    const auto [oh, pad_top] = same_pad(h, kh, stride);
    const auto [ow, pad_left] = same_pad(iw, kw, stride);
    if (grad_out.dim(0) != oh || grad_out.dim(1) != ow || grad_out.dim(2) != cout) {
        throw ShapeError("conv2d_backward: upstream gradient " + grad_out.shape_str() +
                         " does not match forward output shape");
    }

    ConvGrads<T> g{Tensor<T>(input.dims()), zeros_like(w)};
    T* gk = g.weights.kernel.data();
    T* gb = g.weights.bias.data();
    const T* kd = w.kernel.data();
    for (int oy = 0; oy < oh; ++oy) {
        const int iy0 = oy * stride - pad_top;
        for (int ox = 0; ox < ow; ++ox) {
            const int ix0 = ox * stride - pad_left;
            const T* go = &grad_out(oy, ox, 0);
            for (int co = 0; co < cout; ++co) gb[co] += go[co];
            for (int ky = 0; ky < kh; ++ky) {
                const int iy = iy0 + ky;
                if (iy < 0 || iy >= h) continue;
                for (int kx = 0; kx < kw; ++kx) {
                    const int ix = ix0 + kx;
                    if (ix < 0 || ix >= iw) continue;
                    const T* in = &input(iy, ix, 0);
                    T* gin = &g.input(iy, ix, 0);
                    const std::size_t koff = (static_cast<std::size_t>(ky) * kw + kx) * cin * cout;
                    for (int ci = 0; ci < cin; ++ci) {
                        const T v = in[ci];
                        const T* kc = kd + koff + static_cast<std::size_t>(ci) * cout;
                        T* gkc = gk + koff + static_cast<std::size_t>(ci) * cout;
                        T acc = 0;
                        for (int co = 0; co < cout; ++co) {
                            acc += kc[co] * go[co];
                            gkc[co] += v * go[co];
                        }
                        gin[ci] += acc;
                    }
                }
            }
        }
    }
    return g;
}

template <typename T>
Tensor<T> fully_connected(const Tensor<T>& input, const ConvWeights<T>& w) {
    require_rank(input, 1, "fully_connected");
    w.validate("fully_connected");
    if (w.kh() != 1 || w.kw() != 1) {
        throw ShapeError("fully_connected: kernel must be [1, 1, n, m], got " + w.kernel.shape_str());
    }
    const int n = input.dim(0), m = w.c_out();
    if (n != w.c_in()) {
        throw ShapeError("fully_connected: input length " + std::to_string(n) + " does not match weights c_in " +
                         std::to_string(w.c_in()));
    }
    Tensor<T> out({m});
    const T* kd = w.kernel.data();
    for (int j = 0; j < m; ++j) out(j) = w.bias(j);
    for (int i = 0; i < n; ++i) {
        const T v = input(i);
        const T* row = kd + static_cast<std::size_t>(i) * m;
        for (int j = 0; j < m; ++j) out(j) += v * row[j];
    }
    return out;
}

template <typename T>
ConvGrads<T> fully_connected_backward(const Tensor<T>& input, const ConvWeights<T>& w, const Tensor<T>& grad_out) {
    require_rank(input, 1, "fully_connected_backward");
    require_rank(grad_out, 1, "fully_connected_backward");
    const int n = input.dim(0), m = w.c_out();
    if (grad_out.dim(0) != m) {
        throw ShapeError("fully_connected_backward: upstream gradient length mismatch");
    }
    ConvGrads<T> g{Tensor<T>(input.dims()), zeros_like(w)};
    T* gk = g.weights.kernel.data();
    const T* kd = w.kernel.data();
    for (int j = 0; j < m; ++j) g.weights.bias(j) = grad_out(j);
    for (int i = 0; i < n; ++i) {
        const T* row = kd + static_cast<std::size_t>(i) * m;
        T* grow = gk + static_cast<std::size_t>(i) * m;
        T acc = 0;
        const T v = input(i);
        for (int j = 0; j < m; ++j) {
            acc += row[j] * grad_out(j);
            grow[j] += v * grad_out(j);
        }
        g.input(i) = acc;
    }
    return g;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& input, const std::vector<int>& axes) {
    validate_axes(input, axes, "softmax");
    auto [ids, groups] = group_ids(input.dims(), axes);
    const std::int64_t n = input.size();

    std::vector<T> maxv(static_cast<std::size_t>(groups), std::numeric_limits<T>::lowest());
    for (std::int64_t i = 0; i < n; ++i) {
        auto g = static_cast<std::size_t>(ids[static_cast<std::size_t>(i)]);
        maxv[g] = std::max(maxv[g], input[i]);
    }
    Tensor<T> out(input.dims());
    // Group sums accumulate in double so the normalized slice sums to 1
    // within 1e-6 even in f32 mode.
    std::vector<double> sums(static_cast<std::size_t>(groups), 0.0);
    for (std::int64_t i = 0; i < n; ++i) {
        auto g = static_cast<std::size_t>(ids[static_cast<std::size_t>(i)]);
        const T e = std::exp(input[i] - maxv[g]);
        out[i] = e;
        sums[g] += static_cast<double>(e);
    }
    for (std::int64_t i = 0; i < n; ++i) {
        auto g = static_cast<std::size_t>(ids[static_cast<std::size_t>(i)]);
        out[i] = static_cast<T>(static_cast<double>(out[i]) / sums[g]);
    }
    return out;
}

template <typename T>
Tensor<T> softmax_backward(const Tensor<T>& output, const Tensor<T>& grad_out, const std::vector<int>& axes) {
    validate_axes(output, axes, "softmax_backward");
    if (!output.same_shape(grad_out)) {
        throw ShapeError("softmax_backward: shapes differ, " + output.shape_str() + " vs " + grad_out.shape_str());
    }
    auto [ids, groups] = group_ids(output.dims(), axes);
    const std::int64_t n = output.size();
    std::vector<double> dot(static_cast<std::size_t>(groups), 0.0);
    for (std::int64_t i = 0; i < n; ++i) {
        dot[static_cast<std::size_t>(ids[static_cast<std::size_t>(i)])] +=
            static_cast<double>(grad_out[i]) * static_cast<double>(output[i]);
    }
    Tensor<T> gx(output.dims());
    for (std::int64_t i = 0; i < n; ++i) {
        const double d = dot[static_cast<std::size_t>(ids[static_cast<std::size_t>(i)])];
        gx[i] = static_cast<T>(static_cast<double>(output[i]) * (static_cast<double>(grad_out[i]) - d));
    }
    return gx;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
    Tensor<T> out(input.dims());
    for (std::int64_t i = 0; i < input.size(); ++i) out[i] = input[i] > T(0) ? input[i] : T(0);
    return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& grad_out) {
    if (!input.same_shape(grad_out)) throw ShapeError("relu_backward: shape mismatch");
    Tensor<T> gx(input.dims());
    for (std::int64_t i = 0; i < input.size(); ++i) gx[i] = input[i] > T(0) ? grad_out[i] : T(0);
    return gx;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& input) {
    Tensor<T> out(input.dims());
    for (std::int64_t i = 0; i < input.size(); ++i) {
        const T x = input[i];
        if (x >= T(0)) {
            out[i] = T(1) / (T(1) + std::exp(-x));
        } else {
            const T e = std::exp(x);
            out[i] = e / (T(1) + e);
        }
    }
    return out;
}

template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& output, const Tensor<T>& grad_out) {
    if (!output.same_shape(grad_out)) throw ShapeError("sigmoid_backward: shape mismatch");
    Tensor<T> gx(output.dims());
    for (std::int64_t i = 0; i < output.size(); ++i) gx[i] = output[i] * (T(1) - output[i]) * grad_out[i];
    return gx;
}

template <typename T>
Tensor<T> global_average_pool(const Tensor<T>& input) {
    require_rank(input, 3, "global_average_pool");
    const int h = input.dim(0), w = input.dim(1), c = input.dim(2);
    std::vector<double> acc(static_cast<std::size_t>(c), 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const T* p = &input(y, x, 0);
            for (int ci = 0; ci < c; ++ci) acc[static_cast<std::size_t>(ci)] += static_cast<double>(p[ci]);
        }
    }
    Tensor<T> out({c});
    const double inv = 1.0 / (static_cast<double>(h) * w);
    for (int ci = 0; ci < c; ++ci) out(ci) = static_cast<T>(acc[static_cast<std::size_t>(ci)] * inv);
    return out;
}

template <typename T>
Tensor<T> global_average_pool_backward(const Tensor<T>& grad_out, int h, int w) {
    require_rank(grad_out, 1, "global_average_pool_backward");
    const int c = grad_out.dim(0);
    Tensor<T> gx({h, w, c});
    const T inv = T(1) / static_cast<T>(h * w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            T* p = &gx(y, x, 0);
            for (int ci = 0; ci < c; ++ci) p[ci] = grad_out(ci) * inv;
        }
    }
    return gx;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) throw ShapeError("add: shapes differ, " + a.shape_str() + " vs " + b.shape_str());
    Tensor<T> out(a.dims());
    for (std::int64_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

template <typename T>
Tensor<T> elementwise_mul(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("elementwise_mul: shapes differ, " + a.shape_str() + " vs " + b.shape_str());
    }
    Tensor<T> out(a.dims());
    for (std::int64_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> elementwise_mul_backward(const Tensor<T>& a, const Tensor<T>& b,
                                                         const Tensor<T>& grad_out) {
    Tensor<T> ga(a.dims()), gb(b.dims());
    for (std::int64_t i = 0; i < a.size(); ++i) {
        ga[i] = b[i] * grad_out[i];
        gb[i] = a[i] * grad_out[i];
    }
    return {std::move(ga), std::move(gb)};
}

template <typename T>
Tensor<T> broadcast_mul(const Tensor<T>& map, const Tensor<T>& factor) {
    require_rank(map, 3, "broadcast_mul");
    const int h = map.dim(0), w = map.dim(1), c = map.dim(2);
    Tensor<T> out(map.dims());
    if (factor.rank() == 2 && factor.dim(0) == h && factor.dim(1) == w) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const T f = factor(y, x);
                const T* m = &map(y, x, 0);
                T* o = &out(y, x, 0);
                for (int ci = 0; ci < c; ++ci) o[ci] = m[ci] * f;
            }
        }
        return out;
    }
    if (factor.rank() == 1 && factor.dim(0) == c) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const T* m = &map(y, x, 0);
                T* o = &out(y, x, 0);
                for (int ci = 0; ci < c; ++ci) o[ci] = m[ci] * factor(ci);
            }
        }
        return out;
    }
    throw ShapeError("broadcast_mul: factor " + factor.shape_str() + " does not broadcast across map " +
                     map.shape_str());
}

template <typename T>
BroadcastMulGrads<T> broadcast_mul_backward(const Tensor<T>& map, const Tensor<T>& factor,
                                            const Tensor<T>& grad_out) {
    const int h = map.dim(0), w = map.dim(1), c = map.dim(2);
    BroadcastMulGrads<T> g{Tensor<T>(map.dims()), Tensor<T>(factor.dims())};
    if (factor.rank() == 2) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const T f = factor(y, x);
                const T* m = &map(y, x, 0);
                const T* go = &grad_out(y, x, 0);
                T* gm = &g.map(y, x, 0);
                T acc = 0;
                for (int ci = 0; ci < c; ++ci) {
                    gm[ci] = f * go[ci];
                    acc += m[ci] * go[ci];
                }
                g.factor(y, x) = acc;
            }
        }
        return g;
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const T* m = &map(y, x, 0);
            const T* go = &grad_out(y, x, 0);
            T* gm = &g.map(y, x, 0);
            for (int ci = 0; ci < c; ++ci) {
                gm[ci] = factor(ci) * go[ci];
                g.factor(ci) += m[ci] * go[ci];
            }
        }
    }
    return g;
}

template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b) {
    require_rank(a, 1, "concat");
    require_rank(b, 1, "concat");
    Tensor<T> out({a.dim(0) + b.dim(0)});
    for (int i = 0; i < a.dim(0); ++i) out(i) = a(i);
    for (int i = 0; i < b.dim(0); ++i) out(a.dim(0) + i) = b(i);
    return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> concat_backward(int len_a, int len_b, const Tensor<T>& grad_out) {
    if (grad_out.rank() != 1 || grad_out.dim(0) != len_a + len_b) {
        throw ShapeError("concat_backward: gradient length mismatch");
    }
    Tensor<T> ga({len_a}), gb({len_b});
    for (int i = 0; i < len_a; ++i) ga(i) = grad_out(i);
    for (int i = 0; i < len_b; ++i) gb(i) = grad_out(len_a + i);
    return {std::move(ga), std::move(gb)};
}

template <typename T>
MaxPoolResult<T> max_pool(const Tensor<T>& input, int window, int stride) {
    require_rank(input, 3, "max_pool");
    if (window < 1 || stride < 1) throw ShapeError("max_pool: window and stride must be >= 1");
    const int h = input.dim(0), w = input.dim(1), c = input.dim(2);
    if (h < window || w < window) {
        throw ShapeError("max_pool: window " + std::to_string(window) + " larger than input " + input.shape_str());
    }
    const int oh = (h - window) / stride + 1;
    const int ow = (w - window) / stride + 1;
    MaxPoolResult<T> r{Tensor<T>({oh, ow, c}), {}};
    r.argmax.assign(static_cast<std::size_t>(r.output.size()), 0);
    std::int64_t oi = 0;
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            for (int ci = 0; ci < c; ++ci, ++oi) {
                T best = std::numeric_limits<T>::lowest();
                std::int64_t best_idx = 0;
                for (int wy = 0; wy < window; ++wy) {
                    for (int wx = 0; wx < window; ++wx) {
                        const int iy = oy * stride + wy, ix = ox * stride + wx;
                        const std::int64_t idx = (static_cast<std::int64_t>(iy) * w + ix) * c + ci;
                        const T v = input[idx];
                        if (v > best) {
                            best = v;
                            best_idx = idx;
                        }
                    }
                }
                r.output[oi] = best;
                r.argmax[static_cast<std::size_t>(oi)] = best_idx;
            }
        }
    }
    return r;
}

template <typename T>
Tensor<T> max_pool_backward(const MaxPoolResult<T>& fwd, const std::vector<int>& input_dims,
                            const Tensor<T>& grad_out) {
    if (fwd.argmax.empty()) throw ValidationError("max_pool_backward: called before forward");
    if (!grad_out.same_shape(fwd.output)) throw ShapeError("max_pool_backward: gradient shape mismatch");
    Tensor<T> gx(input_dims);
    for (std::int64_t i = 0; i < grad_out.size(); ++i) {
        gx[fwd.argmax[static_cast<std::size_t>(i)]] += grad_out[i];
    }
    return gx;
}

template <typename T>
Tensor<T> flatten(const Tensor<T>& input) {
    Tensor<T> out({static_cast<int>(input.size())});
    for (std::int64_t i = 0; i < input.size(); ++i) out[i] = input[i];
    return out;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& input, std::vector<int> dims) {
    Tensor<T> out(std::move(dims));
    if (out.size() != input.size()) {
        throw ShapeError("reshape: element count mismatch, " + input.shape_str() + " -> " + out.shape_str());
    }
    for (std::int64_t i = 0; i < input.size(); ++i) out[i] = input[i];
    return out;
}

#define HOI_INSTANTIATE_OPS(T)                                                                               \
    template Tensor<T> conv2d<T>(const Tensor<T>&, const ConvWeights<T>&, int);                              \
    template ConvGrads<T> conv2d_backward<T>(const Tensor<T>&, const ConvWeights<T>&, const Tensor<T>&,      \
                                             int);                                                           \
    template Tensor<T> fully_connected<T>(const Tensor<T>&, const ConvWeights<T>&);                          \
    template ConvGrads<T> fully_connected_backward<T>(const Tensor<T>&, const ConvWeights<T>&,               \
                                                      const Tensor<T>&);                                     \
    template Tensor<T> softmax<T>(const Tensor<T>&, const std::vector<int>&);                                \
    template Tensor<T> softmax_backward<T>(const Tensor<T>&, const Tensor<T>&, const std::vector<int>&);     \
    template Tensor<T> relu<T>(const Tensor<T>&);                                                            \
    template Tensor<T> relu_backward<T>(const Tensor<T>&, const Tensor<T>&);                                 \
    template Tensor<T> sigmoid<T>(const Tensor<T>&);                                                         \
    template Tensor<T> sigmoid_backward<T>(const Tensor<T>&, const Tensor<T>&);                              \
    template Tensor<T> global_average_pool<T>(const Tensor<T>&);                                             \
    template Tensor<T> global_average_pool_backward<T>(const Tensor<T>&, int, int);                          \
    template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                                           \
    template Tensor<T> elementwise_mul<T>(const Tensor<T>&, const Tensor<T>&);                               \
    template std::pair<Tensor<T>, Tensor<T>> elementwise_mul_backward<T>(const Tensor<T>&, const Tensor<T>&, \
                                                                         const Tensor<T>&);                  \
    template Tensor<T> broadcast_mul<T>(const Tensor<T>&, const Tensor<T>&);                                 \
    template BroadcastMulGrads<T> broadcast_mul_backward<T>(const Tensor<T>&, const Tensor<T>&,              \
                                                            const Tensor<T>&);                               \
    template Tensor<T> concat<T>(const Tensor<T>&, const Tensor<T>&);                                        \
    template std::pair<Tensor<T>, Tensor<T>> concat_backward<T>(int, int, const Tensor<T>&);                 \
    template MaxPoolResult<T> max_pool<T>(const Tensor<T>&, int, int);                                       \
    template Tensor<T> max_pool_backward<T>(const MaxPoolResult<T>&, const std::vector<int>&,                \
                                            const Tensor<T>&);                                               \
    template Tensor<T> flatten<T>(const Tensor<T>&);                                                         \
    template Tensor<T> reshape<T>(const Tensor<T>&, std::vector<int>);

HOI_INSTANTIATE_OPS(float)
HOI_INSTANTIATE_OPS(double)

#undef HOI_INSTANTIATE_OPS

}  // namespace hoi
