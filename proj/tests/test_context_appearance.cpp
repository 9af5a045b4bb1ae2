#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <random>

#include "doctest.h"
#include "hoi/context_appearance.hpp"
#include "support/oracles.hpp"
#include "support/test_util.hpp"

using namespace hoi;
using hoi::test::fd_gradient;
using hoi::test::grad_rel_err;
using hoi::test::max_abs_diff;
using hoi::test::psroialign_dense_oracle;
using hoi::test::rand_tensor;
using hoi::test::rel_diff;

namespace {

template <typename T>
ContextAggWeights<T> random_ctx_weights(std::mt19937& rng, int k, int cin, int cmid, int cout) {
    ContextAggWeights<T> w;
    w.a_col = ConvWeights<T>{rand_tensor<T>(rng, {k, 1, cin, cmid}), rand_tensor<T>(rng, {cmid})};
    w.a_row = ConvWeights<T>{rand_tensor<T>(rng, {1, k, cmid, cout}), rand_tensor<T>(rng, {cout})};
    w.b_row = ConvWeights<T>{rand_tensor<T>(rng, {1, k, cin, cmid}), rand_tensor<T>(rng, {cmid})};
    w.b_col = ConvWeights<T>{rand_tensor<T>(rng, {k, 1, cmid, cout}), rand_tensor<T>(rng, {cout})};
    return w;
}

// Builds one factorized branch that composes to the separable dense kernel
// K[i][j][ci][co] = u[i] * v[j] * M[ci][co]: the column conv scales by u with
// identity channel mixing, the row conv applies v and M.
template <typename T>
void make_separable_branch(ContextAggWeights<T>& w, const std::vector<T>& u, const std::vector<T>& v,
                           const Tensor<T>& mix, int k, int c) {
    const int cout = mix.dim(1);
    w.a_col = ConvWeights<T>{Tensor<T>({k, 1, c, c}), Tensor<T>({c})};
    for (int i = 0; i < k; ++i) {
        for (int ci = 0; ci < c; ++ci) w.a_col.kernel(i, 0, ci, ci) = u[static_cast<std::size_t>(i)];
    }
    w.a_row = ConvWeights<T>{Tensor<T>({1, k, c, cout}), Tensor<T>({cout})};
    for (int j = 0; j < k; ++j) {
        for (int ci = 0; ci < c; ++ci) {
            for (int co = 0; co < cout; ++co) {
                w.a_row.kernel(0, j, ci, co) = v[static_cast<std::size_t>(j)] * mix(ci, co);
            }
        }
    }
    // Zero branch B of matching shapes.
    w.b_row = ConvWeights<T>{Tensor<T>({1, k, c, c}), Tensor<T>({c})};
    w.b_col = ConvWeights<T>{Tensor<T>({k, 1, c, cout}), Tensor<T>({cout})};
}

}  // namespace

TEST_CASE("context aggregation: k=1 with one identity branch and one zero branch") {
    std::mt19937 rng(0);
    const int c = 3;
    ContextAggWeights<float> w;
    w.a_col = ConvWeights<float>{TensorF({1, 1, c, c}), TensorF({c})};
    w.a_row = ConvWeights<float>{TensorF({1, 1, c, c}), TensorF({c})};
    for (int i = 0; i < c; ++i) {
        w.a_col.kernel(0, 0, i, i) = 1.0f;
        w.a_row.kernel(0, 0, i, i) = 1.0f;
    }
    w.b_row = ConvWeights<float>{TensorF({1, 1, c, c}), TensorF({c})};
    w.b_col = ConvWeights<float>{TensorF({1, 1, c, c}), TensorF({c})};
    const TensorF input = rand_tensor<float>(rng, {5, 6, c});
    const auto t = context_aggregate(input, w);
    CHECK(rel_diff(t.output, input) == 0.0);
}

TEST_CASE("factorized branch equals the dense separable conv") {
    std::mt19937 rng(1);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    for (int k : {3, 5, 7}) {
        for (int trial = 0; trial < 8; ++trial) {
            const int c = 4, cout = 3;
            std::vector<double> u(static_cast<std::size_t>(k)), v(static_cast<std::size_t>(k));
            for (auto& x : u) x = d(rng);
            for (auto& x : v) x = d(rng);
            const TensorD mix = rand_tensor<double>(rng, {c, cout});

            ContextAggWeights<double> w;
            make_separable_branch(w, u, v, mix, k, c);
            const TensorD input = rand_tensor<double>(rng, {8, 8, c});
            const auto factorized = context_aggregate(input, w);

            // Dense k x k oracle with kernel u v^T per channel pair.
            TensorD dense_kernel({k, k, c, cout});
            for (int i = 0; i < k; ++i) {
                for (int j = 0; j < k; ++j) {
                    for (int ci = 0; ci < c; ++ci) {
                        for (int co = 0; co < cout; ++co) {
                            dense_kernel(i, j, ci, co) =
                                u[static_cast<std::size_t>(i)] * v[static_cast<std::size_t>(j)] * mix(ci, co);
                        }
                    }
                }
            }
            const TensorD dense = hoi::test::conv2d_oracle(input, dense_kernel, TensorD({cout}));
            CHECK(rel_diff(factorized.output, dense) < 1e-5);
        }
    }
}

TEST_CASE("context aggregation gradient check") {
    std::mt19937 rng(2);
    auto w = random_ctx_weights<double>(rng, 3, 3, 3, 2);
    TensorD input = rand_tensor<double>(rng, {6, 5, 3});
    const TensorD direction = rand_tensor<double>(rng, {6, 5, 2});
    auto loss = [&]() {
        const auto t = context_aggregate(input, w);
        double s = 0;
        for (std::int64_t i = 0; i < t.output.size(); ++i) s += t.output[i] * direction[i];
        return s;
    };
    const auto t = context_aggregate(input, w);
    const auto g = context_aggregate_backward(input, w, t, direction);
    CHECK(grad_rel_err(g.input, fd_gradient(input, loss)) < 1e-4);
    CHECK(grad_rel_err(g.weights.a_col.kernel, fd_gradient(w.a_col.kernel, loss)) < 1e-4);
    CHECK(grad_rel_err(g.weights.a_row.kernel, fd_gradient(w.a_row.kernel, loss)) < 1e-4);
    CHECK(grad_rel_err(g.weights.b_row.kernel, fd_gradient(w.b_row.kernel, loss)) < 1e-4);
    CHECK(grad_rel_err(g.weights.b_col.kernel, fd_gradient(w.b_col.kernel, loss)) < 1e-4);
    CHECK(grad_rel_err(g.weights.a_row.bias, fd_gradient(w.a_row.bias, loss)) < 1e-4);
}

TEST_CASE("ps_roi_align semantics") {
    std::mt19937 rng(3);
    SUBCASE("constant score map yields the constant for any box") {
        const TensorF maps = TensorF::full({8, 8, 4}, 3.25f);
        const auto r = ps_roi_align(maps, BBox{0.7, 1.2, 6.9, 7.1}, 2, 2);
        for (std::int64_t i = 0; i < r.output.size(); ++i) CHECK(r.output[i] == doctest::Approx(3.25));
    }
    SUBCASE("G=1, E=1, integer-aligned box with samples on cell centers") {
        // Box [0,0,4,4] with S=4 puts taps exactly on the 16 cell centers, so
        // the max over bilinear taps equals the plain max over covered cells.
        const TensorD maps = rand_tensor<double>(rng, {4, 4, 1});
        const auto r = ps_roi_align(maps, BBox{0, 0, 4, 4}, 1, 4);
        double plain_max = maps[0];
        for (std::int64_t i = 0; i < maps.size(); ++i) plain_max = std::max(plain_max, maps[i]);
        CHECK(r.output(0, 0, 0) == doctest::Approx(plain_max).epsilon(1e-12));
        // And it matches the dense oracle at high sampling density.
        const TensorD oracle = psroialign_dense_oracle(maps, BBox{0, 0, 4, 4}, 1, 64);
        CHECK(std::abs(r.output(0, 0, 0) - oracle(0, 0, 0)) < 1e-9);
    }
    SUBCASE("cell locality: cell (0,0) reads only channel group 0") {
        const int grid = 3, e = 2;
        TensorF maps = rand_tensor<float>(rng, {9, 9, grid * grid * e});
        const BBox box{0.5, 0.5, 8.5, 8.5};
        const auto before = ps_roi_align(maps, box, grid, 2);
        // Perturb every channel outside group 0.
        for (int y = 0; y < 9; ++y) {
            for (int x = 0; x < 9; ++x) {
                for (int c = e; c < grid * grid * e; ++c) maps(y, x, c) += 10.0f;
            }
        }
        const auto after = ps_roi_align(maps, box, grid, 2);
        for (int ei = 0; ei < e; ++ei) CHECK(after.output(0, 0, ei) == before.output(0, 0, ei));
        // And perturbing group 0 does change cell (0,0).
        for (int y = 0; y < 9; ++y) {
            for (int x = 0; x < 9; ++x) {
                for (int c = 0; c < e; ++c) maps(y, x, c) += 10.0f;
            }
        }
        const auto changed = ps_roi_align(maps, box, grid, 2);
        CHECK(changed.output(0, 0, 0) != before.output(0, 0, 0));
    }
    SUBCASE("agreement with the dense-sampling oracle at matched density") {
        std::uniform_real_distribution<double> d(0.0, 1.0);
        for (int trial = 0; trial < 20; ++trial) {
            const int grid = 2, e = 2;
            const TensorD maps = rand_tensor<double>(rng, {10, 12, grid * grid * e});
            const double x1 = d(rng) * 8, y1 = d(rng) * 6;
            const BBox box{x1, y1, x1 + 2 + d(rng) * 3, y1 + 2 + d(rng) * 3};
            const auto r = ps_roi_align(maps, box, grid, 64);
            const TensorD oracle = psroialign_dense_oracle(maps, box, grid, 64);
            CHECK(max_abs_diff(r.output, oracle) < 1e-9);
        }
    }
    SUBCASE("translation consistency for interior boxes") {
        const TensorD maps = rand_tensor<double>(rng, {12, 12, 4});
        TensorD shifted({12, 12, 4});
        const int dy = 2, dx = 3;
        for (int y = 0; y < 12; ++y) {
            for (int x = 0; x < 12; ++x) {
                for (int c = 0; c < 4; ++c) {
                    shifted((y + dy) % 12, (x + dx) % 12, c) = maps(y, x, c);
                }
            }
        }
        const BBox box{1.3, 1.7, 5.9, 6.2};
        const BBox moved{box.x1 + dx, box.y1 + dy, box.x2 + dx, box.y2 + dy};
        const auto a = ps_roi_align(maps, box, 2, 2);
        const auto b = ps_roi_align(shifted, moved, 2, 2);
        CHECK(max_abs_diff(a.output, b.output) < 1e-12);
    }
    SUBCASE("degenerate box is an explicit error") {
        const TensorF maps = rand_tensor<float>(rng, {8, 8, 4});
        CHECK_THROWS_WITH_AS(ps_roi_align(maps, BBox{2.0, 2.0, 2.5, 2.5}, 2, 2),
                             doctest::Contains("degenerate ROI"), ValidationError);
        // A box hanging outside gets clamped into a sub-cell sliver.
        CHECK_THROWS_AS(ps_roi_align(maps, BBox{-10.0, 2.0, 0.15, 7.0}, 2, 2), ValidationError);
    }
    SUBCASE("channel count must split into grid*grid groups") {
        const TensorF maps = rand_tensor<float>(rng, {8, 8, 6});
        CHECK_THROWS_AS(ps_roi_align(maps, BBox{1, 1, 7, 7}, 2, 2), ShapeError);
    }
}

TEST_CASE("ps_roi_align backward vs finite differences at non-tied points") {
    std::mt19937 rng(4);
    TensorD maps = rand_tensor<double>(rng, {8, 8, 8});
    const BBox box{1.1, 0.6, 6.8, 7.3};
    const TensorD direction = rand_tensor<double>(rng, {2, 2, 2});
    auto loss = [&]() {
        const auto r = ps_roi_align(maps, box, 2, 2);
        double s = 0;
        for (std::int64_t i = 0; i < r.output.size(); ++i) s += r.output[i] * direction[i];
        return s;
    };
    const auto fwd = ps_roi_align(maps, box, 2, 2);
    const TensorD analytic = ps_roi_align_backward(fwd, maps.dims(), direction);
    CHECK(grad_rel_err(analytic, fd_gradient(maps, loss)) < 1e-4);
}

TEST_CASE("extract_appearance") {
    std::mt19937 rng(5);
    LocalEncodingWeights<float> w;
    w.grid = 2;
    w.cell_channels = 4;
    w.samples = 2;
    SUBCASE("zero weights give a zero vector of width D") {
        w.score_conv = ConvWeights<float>{TensorF({1, 1, 8, 16}), TensorF({16})};
        w.projection_fc = ConvWeights<float>{TensorF({1, 1, 16, 12}), TensorF({12})};
        const TensorF ctx = rand_tensor<float>(rng, {8, 8, 8});
        const auto f = extract_appearance(ctx, BBox{4, 4, 24, 28}, 4, w);
        REQUIRE(f.f_app.dim(0) == 12);
        for (int i = 0; i < 12; ++i) CHECK(f.f_app(i) == 0.0f);
    }
    SUBCASE("default configuration emits a 512-wide vector") {
        LocalEncodingWeights<float> big;
        big.grid = 7;
        big.cell_channels = 8;
        big.samples = 2;
        const int score = 7 * 7 * 8;
        big.score_conv = ConvWeights<float>{rand_tensor<float>(rng, {1, 1, 16, score}, -0.05, 0.05),
                                            TensorF({score})};
        big.projection_fc = ConvWeights<float>{rand_tensor<float>(rng, {1, 1, score, 512}, -0.05, 0.05),
                                               TensorF({512})};
        const TensorF ctx = rand_tensor<float>(rng, {14, 14, 16});
        const auto f = extract_appearance(ctx, BBox{32, 32, 320, 352}, 32, big);
        CHECK(f.f_app.dim(0) == 512);
        for (int i = 0; i < 512; ++i) CHECK(f.f_app(i) >= 0.0f);  // post-ReLU
    }
    SUBCASE("deterministic for identical inputs") {
        w.score_conv = ConvWeights<float>{rand_tensor<float>(rng, {1, 1, 8, 16}), rand_tensor<float>(rng, {16})};
        w.projection_fc =
            ConvWeights<float>{rand_tensor<float>(rng, {1, 1, 16, 12}), rand_tensor<float>(rng, {12})};
        const TensorF ctx = rand_tensor<float>(rng, {8, 8, 8});
        const auto a = extract_appearance(ctx, BBox{4, 4, 24, 28}, 4, w);
        const auto b = extract_appearance(ctx, BBox{4, 4, 24, 28}, 4, w);
        for (int i = 0; i < 12; ++i) CHECK(a.f_app(i) == b.f_app(i));
    }
}

TEST_CASE("local encoding chain gradient check") {
    std::mt19937 rng(6);
    LocalEncodingWeights<double> w;
    w.grid = 2;
    w.cell_channels = 3;
    w.samples = 2;
    w.score_conv = ConvWeights<double>{rand_tensor<double>(rng, {1, 1, 5, 12}), rand_tensor<double>(rng, {12})};
    w.projection_fc = ConvWeights<double>{rand_tensor<double>(rng, {1, 1, 12, 7}), rand_tensor<double>(rng, {7})};
    TensorD ctx = rand_tensor<double>(rng, {8, 8, 5});
    const BBox box{1.2, 0.8, 6.4, 7.0};
    const TensorD direction = rand_tensor<double>(rng, {7});
    auto loss = [&]() {
        const TensorD maps = conv2d(ctx, w.score_conv);
        const auto t = encode_box(maps, box, w);
        double s = 0;
        for (int i = 0; i < 7; ++i) s += t.f_app(i) * direction(i);
        return s;
    };
    const TensorD maps = conv2d(ctx, w.score_conv);
    const auto trace = encode_box(maps, box, w);
    auto grads = local_encoding_grads_like(w);
    TensorD d_maps = zeros_like(maps);
    encode_box_backward(trace, w, direction, d_maps, grads);
    const auto g_conv = conv2d_backward(ctx, w.score_conv, d_maps);
    CHECK(grad_rel_err(g_conv.input, fd_gradient(ctx, loss)) < 1e-4);
    CHECK(grad_rel_err(g_conv.weights.kernel, fd_gradient(w.score_conv.kernel, loss)) < 1e-4);
    CHECK(grad_rel_err(grads.projection_fc.kernel, fd_gradient(w.projection_fc.kernel, loss)) < 1e-4);
    CHECK(grad_rel_err(grads.projection_fc.bias, fd_gradient(w.projection_fc.bias, loss)) < 1e-4);
}
