#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstring>
#include <random>

#include "doctest.h"
#include "hoi/attention.hpp"
#include "support/test_util.hpp"

using namespace hoi;
using hoi::test::fd_gradient;
using hoi::test::grad_rel_err;
using hoi::test::rand_tensor;
using hoi::test::rel_diff;

namespace {

template <typename T>
AttentionWeights<T> random_attention(std::mt19937& rng, int d, int bottleneck, int hidden, int n_actions,
                                     double scale = 1.0) {
    AttentionWeights<T> w;
    w.heatmap_conv = ConvWeights<T>{rand_tensor<T>(rng, {1, 1, d, 1}, -scale, scale), rand_tensor<T>(rng, {1})};
    w.se_reduce =
        ConvWeights<T>{rand_tensor<T>(rng, {1, 1, d, bottleneck}, -scale, scale), rand_tensor<T>(rng, {bottleneck})};
    w.se_expand =
        ConvWeights<T>{rand_tensor<T>(rng, {1, 1, bottleneck, d}, -scale, scale), rand_tensor<T>(rng, {d})};
    w.head_fc1 =
        ConvWeights<T>{rand_tensor<T>(rng, {1, 1, 2 * d, hidden}, -scale, scale), rand_tensor<T>(rng, {hidden})};
    w.head_fc2 = ConvWeights<T>{rand_tensor<T>(rng, {1, 1, hidden, n_actions}, -scale, scale),
                                rand_tensor<T>(rng, {n_actions})};
    return w;
}

double spatial_sum(const TensorF& m) {
    double s = 0;
    for (std::int64_t i = 0; i < m.size(); ++i) s += m[i];
    return s;
}

}  // namespace

TEST_CASE("modulate: attention-map feature modulation") {
    std::mt19937 rng(0);
    SUBCASE("A constant over space gives uniform attention and F_m = A/(h*w)") {
        const int h = 3, w = 4, d = 5;
        TensorF A({h, w, d});
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                for (int c = 0; c < d; ++c) A(y, x, c) = 0.3f * static_cast<float>(c) - 0.5f;
            }
        }
        const TensorF f_app = rand_tensor<float>(rng, {d}, 0.0, 1.0);
        AttentionTrace<float> tr;
        modulate(f_app, A, tr);
        for (std::int64_t i = 0; i < tr.attn_map.size(); ++i) {
            CHECK(tr.attn_map[i] == doctest::Approx(1.0 / (h * w)).epsilon(1e-6));
        }
        for (int y = 0; y < h; ++y) {
            for (int c = 0; c < d; ++c) {
                CHECK(tr.F_m(y, 1, c) == doctest::Approx(A(y, 1, c) / (h * w)).epsilon(1e-5));
            }
        }
    }
    SUBCASE("f_app = 0 gives uniform attention for any A") {
        const TensorF A = rand_tensor<float>(rng, {4, 4, 6});
        AttentionTrace<float> tr;
        modulate(TensorF({6}), A, tr);
        for (std::int64_t i = 0; i < tr.attn_map.size(); ++i) {
            CHECK(tr.attn_map[i] == doctest::Approx(1.0 / 16).epsilon(1e-6));
        }
    }
    SUBCASE("random 4x4x8 case matches a direct dot/exp/normalize oracle") {
        const TensorD A = rand_tensor<double>(rng, {4, 4, 8});
        const TensorD f_app = rand_tensor<double>(rng, {8}, 0.0, 1.0);
        AttentionTrace<double> tr;
        modulate(f_app, A, tr);
        // Oracle: dot products, exp, normalize, then per-position scaling.
        double logits[4][4];
        double maxv = -1e300;
        for (int y = 0; y < 4; ++y) {
            for (int x = 0; x < 4; ++x) {
                double dot = 0;
                for (int c = 0; c < 8; ++c) dot += f_app(c) * A(y, x, c);
                logits[y][x] = dot;
                maxv = std::max(maxv, dot);
            }
        }
        double z = 0;
        for (auto& row : logits) {
            for (double v : row) z += std::exp(v - maxv);
        }
        for (int y = 0; y < 4; ++y) {
            for (int x = 0; x < 4; ++x) {
                const double a = std::exp(logits[y][x] - maxv) / z;
                CHECK(tr.attn_map(y, x) == doctest::Approx(a).epsilon(1e-6));
                for (int c = 0; c < 8; ++c) {
                    CHECK(tr.F_m(y, x, c) == doctest::Approx(a * A(y, x, c)).epsilon(1e-6));
                }
            }
        }
    }
    SUBCASE("width mismatch is an error") {
        AttentionTrace<float> tr;
        TensorF f({4});
        const TensorF A = rand_tensor<float>(rng, {3, 3, 6});
        CHECK_THROWS_AS(modulate(f, A, tr), ShapeError);
    }
}

TEST_CASE("spatial_refine: normalized heatmap reweighting") {
    std::mt19937 rng(1);
    SUBCASE("zero conv weights give uniform H_norm and S_att = F_m/(h*w)") {
        AttentionTrace<float> tr;
        tr.F_m = rand_tensor<float>(rng, {3, 4, 5});
        ConvWeights<float> heat{TensorF({1, 1, 5, 1}), TensorF({1})};
        spatial_refine(heat, tr);
        for (std::int64_t i = 0; i < tr.heatmap_norm.size(); ++i) {
            CHECK(tr.heatmap_norm[i] == doctest::Approx(1.0 / 12).epsilon(1e-6));
        }
        CHECK(rel_diff(tr.S_att, broadcast_mul(tr.F_m, TensorF::full({3, 4}, 1.0f / 12))) < 1e-6);
    }
    SUBCASE("a dominant logit concentrates S_att at that position") {
        AttentionTrace<float> tr;
        tr.F_m = TensorF::full({3, 3, 2}, 1.0f);
        tr.F_m(1, 1, 0) = 100.0f;  // heatmap conv picks channel 0
        ConvWeights<float> heat{TensorF({1, 1, 2, 1}), TensorF({1})};
        heat.kernel(0, 0, 0, 0) = 1.0f;
        spatial_refine(heat, tr);
        const double peak = tr.heatmap_norm(1, 1);
        CHECK(peak == doctest::Approx(1.0).epsilon(1e-6));
        for (int y = 0; y < 3; ++y) {
            for (int x = 0; x < 3; ++x) {
                if (y == 1 && x == 1) continue;
                CHECK(tr.heatmap_norm(y, x) < 1e-20 * peak);
            }
        }
    }
    SUBCASE("gradient check through the spatial refinement") {
        TensorD F_m = rand_tensor<double>(rng, {3, 4, 5});
        ConvWeights<double> heat{rand_tensor<double>(rng, {1, 1, 5, 1}), rand_tensor<double>(rng, {1})};
        const TensorD direction = rand_tensor<double>(rng, {3, 4, 5});
        auto forward = [&]() {
            AttentionTrace<double> tr;
            tr.F_m = F_m;
            spatial_refine(heat, tr);
            return tr;
        };
        auto loss = [&]() {
            const auto tr = forward();
            double s = 0;
            for (std::int64_t i = 0; i < tr.S_att.size(); ++i) s += tr.S_att[i] * direction[i];
            return s;
        };
        // Analytic: backward through S_att = H_norm * F_m and the softmax+conv.
        const auto tr = forward();
        auto g2 = broadcast_mul_backward(tr.F_m, tr.heatmap_norm, direction);
        const TensorD d_heat = softmax_backward(tr.heatmap_norm, g2.factor, {0, 1});
        auto gc = conv2d_backward(tr.F_m, heat, reshape(d_heat, {3, 4, 1}));
        TensorD d_Fm = g2.map;
        accumulate(d_Fm, gc.input);
        CHECK(grad_rel_err(d_Fm, fd_gradient(F_m, loss)) < 1e-4);
        CHECK(grad_rel_err(gc.weights.kernel, fd_gradient(heat.kernel, loss)) < 1e-4);
        CHECK(grad_rel_err(gc.weights.bias, fd_gradient(heat.bias, loss)) < 1e-4);
    }
}

TEST_CASE("channel_refine: squeeze-excitation gating") {
    std::mt19937 rng(2);
    SUBCASE("zero FC weights and bias give C_att = 0.5 everywhere") {
        AttentionTrace<float> tr;
        tr.F_m = rand_tensor<float>(rng, {4, 4, 6});
        ConvWeights<float> reduce{TensorF({1, 1, 6, 2}), TensorF({2})};
        ConvWeights<float> expand{TensorF({1, 1, 2, 6}), TensorF({6})};
        channel_refine(reduce, expand, tr);
        REQUIRE(tr.C_att.dim(0) == 6);
        for (int c = 0; c < 6; ++c) CHECK(tr.C_att(c) == 0.5f);
    }
    SUBCASE("output width D regardless of spatial extents") {
        for (auto [h, w] : {std::pair{2, 2}, {5, 7}}) {
            AttentionTrace<float> tr;
            tr.F_m = rand_tensor<float>(rng, {h, w, 6});
            ConvWeights<float> reduce{rand_tensor<float>(rng, {1, 1, 6, 2}), rand_tensor<float>(rng, {2})};
            ConvWeights<float> expand{rand_tensor<float>(rng, {1, 1, 2, 6}), rand_tensor<float>(rng, {6})};
            channel_refine(reduce, expand, tr);
            CHECK(tr.C_att.dim(0) == 6);
        }
    }
    SUBCASE("random case matches the direct squeeze-excite oracle") {
        AttentionTrace<double> tr;
        tr.F_m = rand_tensor<double>(rng, {3, 3, 4});
        ConvWeights<double> reduce{rand_tensor<double>(rng, {1, 1, 4, 2}), rand_tensor<double>(rng, {2})};
        ConvWeights<double> expand{rand_tensor<double>(rng, {1, 1, 2, 4}), rand_tensor<double>(rng, {4})};
        channel_refine(reduce, expand, tr);
        // Direct: z = mean over positions; hidden = relu(W2 z); c = sigmoid(W1 hidden).
        double z[4] = {};
        for (int y = 0; y < 3; ++y) {
            for (int x = 0; x < 3; ++x) {
                for (int c = 0; c < 4; ++c) z[c] += tr.F_m(y, x, c) / 9.0;
            }
        }
        double hidden[2];
        for (int j = 0; j < 2; ++j) {
            double acc = reduce.bias(j);
            for (int i = 0; i < 4; ++i) acc += z[i] * reduce.kernel(0, 0, i, j);
            hidden[j] = std::max(0.0, acc);
        }
        for (int c = 0; c < 4; ++c) {
            double acc = expand.bias(c);
            for (int j = 0; j < 2; ++j) acc += hidden[j] * expand.kernel(0, 0, j, c);
            const double expect = 1.0 / (1.0 + std::exp(-acc));
            CHECK(tr.C_att(c) == doctest::Approx(expect).epsilon(1e-6));
        }
    }
}

TEST_CASE("refine: gated refinement and pooling") {
    std::mt19937 rng(3);
    SUBCASE("saturated C_att (logits about 40) makes F_r equal S_att") {
        AttentionTrace<float> tr;
        const TensorF f_app = rand_tensor<float>(rng, {4}, 0.0, 1.0);
        const TensorF A = rand_tensor<float>(rng, {3, 3, 4});
        AttentionWeights<float> w = random_attention<float>(rng, 4, 2, 4, 3, 0.4);
        // se_expand bias of 40 drives every channel gate to sigmoid(~40) = 1.
        w.se_expand.kernel = TensorF({1, 1, 2, 4});
        for (int c = 0; c < 4; ++c) w.se_expand.bias(c) = 40.0f;
        const auto trace = attention_forward(f_app, A, w);
        CHECK(rel_diff(trace.F_r, trace.S_att) < 1e-6);
    }
    SUBCASE("zero F_m gives zero F_r and f_r") {
        AttentionTrace<float> tr;
        tr.F_m = TensorF({3, 3, 4});
        AttentionWeights<float> w = random_attention<float>(rng, 4, 2, 4, 3);
        spatial_refine(w.heatmap_conv, tr);
        channel_refine(w.se_reduce, w.se_expand, tr);
        refine(tr);
        for (std::int64_t i = 0; i < tr.F_r.size(); ++i) CHECK(tr.F_r[i] == 0.0f);
        for (int c = 0; c < 4; ++c) CHECK(tr.f_r(c) == 0.0f);
    }
    SUBCASE("full-chain modulate-refine gradient check") {
        const int d = 5;
        AttentionWeights<double> w = random_attention<double>(rng, d, 2, 4, 3);
        TensorD f_app = rand_tensor<double>(rng, {d}, 0.0, 1.0);
        TensorD A = rand_tensor<double>(rng, {4, 3, d});
        const TensorD direction = rand_tensor<double>(rng, {d});
        auto loss = [&]() {
            const auto tr = attention_forward(f_app, A, w);
            double s = 0;
            for (int c = 0; c < d; ++c) s += tr.f_r(c) * direction(c);
            return s;
        };
        const auto tr = attention_forward(f_app, A, w);
        auto grads = attention_grads_like(w);
        const auto g = attention_backward(f_app, A, w, tr, direction, grads);
        CHECK(grad_rel_err(g.f_app, fd_gradient(f_app, loss)) < 1e-4);
        CHECK(grad_rel_err(g.A, fd_gradient(A, loss)) < 1e-4);
        CHECK(grad_rel_err(grads.heatmap_conv.kernel, fd_gradient(w.heatmap_conv.kernel, loss)) < 1e-4);
        CHECK(grad_rel_err(grads.se_reduce.kernel, fd_gradient(w.se_reduce.kernel, loss)) < 1e-4);
        CHECK(grad_rel_err(grads.se_expand.kernel, fd_gradient(w.se_expand.kernel, loss)) < 1e-4);
        CHECK(grad_rel_err(grads.se_expand.bias, fd_gradient(w.se_expand.bias, loss)) < 1e-4);
    }
}

TEST_CASE("action head") {
    std::mt19937 rng(4);
    SUBCASE("zero weights give 0.5 for every action") {
        AttentionWeights<float> w = random_attention<float>(rng, 4, 2, 6, 5);
        w.head_fc1 = ConvWeights<float>{TensorF({1, 1, 8, 6}), TensorF({6})};
        w.head_fc2 = ConvWeights<float>{TensorF({1, 1, 6, 5}), TensorF({5})};
        const auto t = action_head(rand_tensor<float>(rng, {4}), rand_tensor<float>(rng, {4}), w);
        for (int a = 0; a < 5; ++a) CHECK(t.scores(a) == 0.5f);
    }
    SUBCASE("V-COCO configuration emits 26 action scores") {
        AttentionWeights<float> w = random_attention<float>(rng, 8, 2, 16, 26, 0.2);
        const auto t = action_head(rand_tensor<float>(rng, {8}), rand_tensor<float>(rng, {8}), w);
        CHECK(t.scores.dim(0) == 26);
    }
    SUBCASE("random case matches the composed oracle") {
        AttentionWeights<double> w = random_attention<double>(rng, 3, 1, 4, 2);
        const TensorD f_app = rand_tensor<double>(rng, {3}, 0.0, 1.0);
        const TensorD f_r = rand_tensor<double>(rng, {3});
        const auto t = action_head(f_app, f_r, w);
        const TensorD x = concat(f_app, f_r);
        const TensorD expect = sigmoid(fully_connected(relu(fully_connected(x, w.head_fc1)), w.head_fc2));
        CHECK(rel_diff(t.scores, expect) < 1e-6);
    }
    SUBCASE("head gradient check") {
        AttentionWeights<double> w = random_attention<double>(rng, 4, 2, 5, 3);
        TensorD f_app = rand_tensor<double>(rng, {4}, 0.0, 1.0);
        TensorD f_r = rand_tensor<double>(rng, {4});
        const TensorD direction = rand_tensor<double>(rng, {3});
        auto loss = [&]() {
            const auto t = action_head(f_app, f_r, w);
            double s = 0;
            for (int a = 0; a < 3; ++a) s += t.scores(a) * direction(a);
            return s;
        };
        const auto t = action_head(f_app, f_r, w);
        auto grads = attention_grads_like(w);
        const auto g = action_head_backward(t, w, direction, grads);
        CHECK(grad_rel_err(g.f_app, fd_gradient(f_app, loss)) < 1e-4);
        CHECK(grad_rel_err(g.f_r, fd_gradient(f_r, loss)) < 1e-4);
        CHECK(grad_rel_err(grads.head_fc1.kernel, fd_gradient(w.head_fc1.kernel, loss)) < 1e-4);
        CHECK(grad_rel_err(grads.head_fc2.kernel, fd_gradient(w.head_fc2.kernel, loss)) < 1e-4);
    }
}

TEST_CASE("attention invariants") {
    std::mt19937 rng(5);
    const int d = 6;
    AttentionWeights<float> w = random_attention<float>(rng, d, 2, 5, 4, 0.5);
    SUBCASE("attn_map and H_norm sum to 1; shapes are preserved; C_att inside (0,1)") {
        for (int trial = 0; trial < 25; ++trial) {
            const TensorF A = rand_tensor<float>(rng, {5, 6, d}, -2.0, 2.0);
            const TensorF f_app = rand_tensor<float>(rng, {d}, 0.0, 1.5);
            const auto tr = attention_forward(f_app, A, w);
            CHECK(std::abs(spatial_sum(tr.attn_map) - 1.0) < 1e-6);
            CHECK(std::abs(spatial_sum(tr.heatmap_norm) - 1.0) < 1e-6);
            CHECK(tr.F_m.same_shape(A));
            CHECK(tr.S_att.same_shape(A));
            CHECK(tr.F_r.same_shape(A));
            CHECK(tr.C_att.dim(0) == d);
            for (int c = 0; c < d; ++c) {
                CHECK(tr.C_att(c) > 0.0f);
                CHECK(tr.C_att(c) < 1.0f);
            }
            const auto head = action_head(f_app, tr.f_r, w);
            for (std::int64_t i = 0; i < head.scores.size(); ++i) {
                CHECK(head.scores[i] > 0.0f);
                CHECK(head.scores[i] < 1.0f);
            }
        }
    }
    SUBCASE("scaling f_app by a positive factor preserves the attention argmax") {
        for (int trial = 0; trial < 20; ++trial) {
            const TensorF A = rand_tensor<float>(rng, {5, 5, d}, -2.0, 2.0);
            TensorF f_app = rand_tensor<float>(rng, {d}, 0.1, 1.0);
            AttentionTrace<float> base;
            modulate(f_app, A, base);
            auto argmax = [](const TensorF& m) {
                std::int64_t best = 0;
                for (std::int64_t i = 0; i < m.size(); ++i) {
                    if (m[i] > m[best]) best = i;
                }
                return best;
            };
            const auto base_arg = argmax(base.attn_map);
            for (float lambda : {0.5f, 2.0f, 7.0f}) {
                TensorF scaled({d});
                for (int c = 0; c < d; ++c) scaled(c) = f_app(c) * lambda;
                AttentionTrace<float> tr;
                modulate(scaled, A, tr);
                CHECK(argmax(tr.attn_map) == base_arg);
            }
        }
    }
    SUBCASE("bitwise determinism for identical inputs") {
        const TensorF A = rand_tensor<float>(rng, {4, 4, d});
        const TensorF f_app = rand_tensor<float>(rng, {d}, 0.0, 1.0);
        const auto a = attention_forward(f_app, A, w);
        const auto b = attention_forward(f_app, A, w);
        CHECK(std::memcmp(a.F_r.data(), b.F_r.data(), sizeof(float) * static_cast<std::size_t>(a.F_r.size())) ==
              0);
        CHECK(std::memcmp(a.f_r.data(), b.f_r.data(), sizeof(float) * static_cast<std::size_t>(a.f_r.size())) ==
              0);
    }
}
