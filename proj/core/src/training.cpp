#include "hoi/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "json.hpp"

namespace hoi {

void SgdConfig::validate() const {
    if (!(learning_rate > 0)) throw ValidationError("sgd: learning rate must be > 0");
    if (momentum < 0 || momentum >= 1) throw ValidationError("sgd: momentum must be in [0, 1)");
    if (weight_decay < 0) throw ValidationError("sgd: weight decay must be >= 0");
}

template <typename T>
void sgd_step(Tensor<T>& param, const Tensor<T>& grad, Tensor<T>& velocity, const SgdConfig& cfg) {
    cfg.validate();
    if (!param.same_shape(grad) || !param.same_shape(velocity)) {
        throw ShapeError("sgd_step: param " + param.shape_str() + ", grad " + grad.shape_str() +
                         " and velocity " + velocity.shape_str() + " must share a shape");
    }
    const T lr = static_cast<T>(cfg.learning_rate);
    const T m = static_cast<T>(cfg.momentum);
    const T wd = static_cast<T>(cfg.weight_decay);
    for (std::int64_t i = 0; i < param.size(); ++i) {
        velocity[i] = m * velocity[i] - lr * (grad[i] + wd * param[i]);
        param[i] += velocity[i];
    }
}

namespace {
constexpr double kBceEps = 1e-7;
}

template <typename T>
T bce_loss(const Tensor<T>& scores, const Tensor<T>& labels) {
    if (!scores.same_shape(labels)) throw ShapeError("bce_loss: scores and labels must share a shape");
    double sum = 0;
    for (std::int64_t i = 0; i < scores.size(); ++i) {
        const double s = std::clamp(static_cast<double>(scores[i]), kBceEps, 1.0 - kBceEps);
        const double y = static_cast<double>(labels[i]);
        sum -= y * std::log(s) + (1.0 - y) * std::log(1.0 - s);
    }
    return static_cast<T>(sum / static_cast<double>(scores.size()));
}

template <typename T>
Tensor<T> bce_loss_backward(const Tensor<T>& scores, const Tensor<T>& labels) {
    if (!scores.same_shape(labels)) throw ShapeError("bce_loss_backward: scores and labels must share a shape");
    Tensor<T> g(scores.dims());
    const double inv_n = 1.0 / static_cast<double>(scores.size());
    for (std::int64_t i = 0; i < scores.size(); ++i) {
        const double s = std::clamp(static_cast<double>(scores[i]), kBceEps, 1.0 - kBceEps);
        const double y = static_cast<double>(labels[i]);
        g[i] = static_cast<T>((-y / s + (1.0 - y) / (1.0 - s)) * inv_n);
    }
    return g;
}

template <typename T>
ConvWeights<T> init_conv(std::mt19937& rng, int kh, int kw, int c_in, int c_out) {
    const double fan_in = static_cast<double>(kh) * kw * c_in;
    const double fan_out = static_cast<double>(kh) * kw * c_out;
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    ConvWeights<T> w;
    w.kernel = Tensor<T>({kh, kw, c_in, c_out});
    for (std::int64_t i = 0; i < w.kernel.size(); ++i) w.kernel[i] = static_cast<T>(dist(rng));
    w.bias = Tensor<T>({c_out});
    return w;
}

namespace {

template <typename T>
AttentionWeights<T> init_attention(std::mt19937& rng, int d, int reduction, int head_hidden, int n_actions) {
    AttentionWeights<T> w;
    w.heatmap_conv = init_conv<T>(rng, 1, 1, d, 1);
    const int bottleneck = std::max(1, d / reduction);
    w.se_reduce = init_conv<T>(rng, 1, 1, d, bottleneck);
    w.se_expand = init_conv<T>(rng, 1, 1, bottleneck, d);
    w.head_fc1 = init_conv<T>(rng, 1, 1, 2 * d, head_hidden);
    w.head_fc2 = init_conv<T>(rng, 1, 1, head_hidden, n_actions);
    return w;
}

template <typename T>
StreamWeights<T> init_stream(std::mt19937& rng, const ModelConfig& cfg, int feature_channels) {
    StreamWeights<T> s;
    const int k = cfg.kernel_size;
    const int cmid = cfg.context_channels;  // c_mid = c_out in the factorized branches
    const int cout = cfg.context_channels;
    s.context.a_col = init_conv<T>(rng, k, 1, feature_channels, cmid);
    s.context.a_row = init_conv<T>(rng, 1, k, cmid, cout);
    s.context.b_row = init_conv<T>(rng, 1, k, feature_channels, cmid);
    s.context.b_col = init_conv<T>(rng, k, 1, cmid, cout);
    const int score_channels = cfg.grid_size * cfg.grid_size * cfg.cell_channels;
    s.local.score_conv = init_conv<T>(rng, 1, 1, cout, score_channels);
    s.local.projection_fc = init_conv<T>(rng, 1, 1, score_channels, cfg.embed_dim);
    s.local.grid = cfg.grid_size;
    s.local.cell_channels = cfg.cell_channels;
    s.local.samples = cfg.roi_samples;
    s.attention = init_attention<T>(rng, cfg.embed_dim, cfg.se_reduction, cfg.head_hidden, cfg.n_actions);
    return s;
}

}  // namespace

ModelWeights<float> init_model(const ModelConfig& cfg, int feature_channels, std::mt19937& rng) {
    cfg.validate();
    ModelWeights<float> w;
    w.project = init_conv<float>(rng, 1, 1, feature_channels, cfg.embed_dim);
    w.human = init_stream<float>(rng, cfg, feature_channels);
    w.object = init_stream<float>(rng, cfg, feature_channels);
    w.pairwise.conv1 = init_conv<float>(rng, 5, 5, 2, 16);
    w.pairwise.conv2 = init_conv<float>(rng, 5, 5, 16, 32);
    const int pooled = kPatternSize / 4;
    w.pairwise.fc = init_conv<float>(rng, 1, 1, pooled * pooled * 32, cfg.n_actions);
    w.validate_against(cfg, feature_channels);
    return w;
}

ToyBackboneWeights<float> init_toy_backbone(std::mt19937& rng, int mid_channels, int out_channels) {
    ToyBackboneWeights<float> w;
    w.conv1 = init_conv<float>(rng, 3, 3, 3, mid_channels);
    w.conv2 = init_conv<float>(rng, 3, 3, mid_channels, out_channels);
    return w;
}

ModelConfig toy_model_config() {
    ModelConfig cfg;
    cfg.n_actions = 4;
    cfg.feature_channels = 8;
    cfg.context_channels = 8;
    cfg.kernel_size = 3;
    cfg.embed_dim = 16;
    cfg.grid_size = 2;
    cfg.cell_channels = 4;
    cfg.se_reduction = 4;
    cfg.head_hidden = 16;
    cfg.roi_samples = 2;
    cfg.human_thresh = 0.8;
    cfg.object_thresh = 0.4;
    cfg.roles = {
        {0, kRoleDirectObject, "beside", 2},
        {1, kRoleDirectObject, "overlapping", 2},
        {3, kRoleInstrument, "using", 2},
        {2, kRoleAgentOnly, "alone", std::nullopt},
    };
    cfg.validate();
    return cfg;
}

namespace {

constexpr int kSceneSize = 64;
constexpr int kHumanClass = 1;
constexpr int kObjectClass = 2;

struct Gap {
    double dx = 0, dy = 0;
};

Gap box_gap(const BBox& a, const BBox& b) {
    Gap g;
    g.dx = std::max(0.0, std::max(a.x1 - b.x2, b.x1 - a.x2));
    g.dy = std::max(0.0, std::max(a.y1 - b.y2, b.y1 - a.y2));
    return g;
}

void paint_box(TensorF& image, const BBox& b, int channel) {
    const int x1 = static_cast<int>(b.x1), y1 = static_cast<int>(b.y1);
    const int x2 = std::min(static_cast<int>(b.x2), image.dim(1));
    const int y2 = std::min(static_cast<int>(b.y2), image.dim(0));
    for (int y = y1; y < y2; ++y) {
        for (int x = x1; x < x2; ++x) image(y, x, channel) = 1.0f;
    }
}

int rand_int(std::mt19937& rng, int lo, int hi) {  // inclusive
    std::uniform_int_distribution<int> d(lo, hi);
    return d(rng);
}

}  // namespace

TensorF synthetic_pair_label(const BBox& human, const BBox& object, int n_actions) {
    TensorF label({n_actions});
    const Gap g = box_gap(human, object);
    const bool overlapping = g.dx == 0 && g.dy == 0;
    if (overlapping) {
        label(1) = 1.0f;
    } else if (std::max(g.dx, g.dy) <= 4.0) {
        label(0) = 1.0f;
    }
    return label;
}

SyntheticScene make_synthetic_scene(std::mt19937& rng, int n_actions, int n_objects) {
    if (n_actions < 2) throw ValidationError("make_synthetic_scene: need at least actions 0 and 1");
    if (n_objects < 1) throw ValidationError("make_synthetic_scene: need at least one object");
    SyntheticScene scene;
    scene.image = TensorF({kSceneSize, kSceneSize, 3});

    const int hw = rand_int(rng, 14, 22), hh = rand_int(rng, 14, 22);
    const int hx = rand_int(rng, 8, kSceneSize - hw - 8);
    const int hy = rand_int(rng, 8, kSceneSize - hh - 8);
    const BBox human{static_cast<double>(hx), static_cast<double>(hy), static_cast<double>(hx + hw),
                     static_cast<double>(hy + hh)};
    paint_box(scene.image, human, 0);
    scene.detections.push_back({human, kHumanClass, 1.0, DetKind::Human});

    scene.planted_object = rand_int(rng, 0, n_objects - 1);
    for (int j = 0; j < n_objects; ++j) {
        const int ow = rand_int(rng, 8, 14), oh = rand_int(rng, 8, 14);
        BBox obj;
        if (j == scene.planted_object) {
            if (rand_int(rng, 0, 1) == 0) {
                // Beside: disjoint with a small gap on one axis and overlap on
                // the other, so max(dx, dy) = gap.
                const int gap = rand_int(rng, 1, 4);
                const int side = rand_int(rng, 0, 3);
                int ox, oy;
                if (side == 0) {  // left
                    ox = hx - gap - ow;
                    oy = rand_int(rng, hy - oh / 2, hy + hh - oh / 2);
                } else if (side == 1) {  // right
                    ox = hx + hw + gap;
                    oy = rand_int(rng, hy - oh / 2, hy + hh - oh / 2);
                } else if (side == 2) {  // above
                    oy = hy - gap - oh;
                    ox = rand_int(rng, hx - ow / 2, hx + hw - ow / 2);
                } else {  // below
                    oy = hy + hh + gap;
                    ox = rand_int(rng, hx - ow / 2, hx + hw - ow / 2);
                }
                // Keep the perpendicular extent overlapping the human's.
                if (side <= 1) {
                    oy = std::clamp(oy, hy - oh + 2, hy + hh - 2);
                } else {
                    ox = std::clamp(ox, hx - ow + 2, hx + hw - 2);
                }
                ox = std::clamp(ox, 0, kSceneSize - ow);
                oy = std::clamp(oy, 0, kSceneSize - oh);
                obj = {static_cast<double>(ox), static_cast<double>(oy), static_cast<double>(ox + ow),
                       static_cast<double>(oy + oh)};
            } else {
                // Overlapping: the object's corner lands inside the human box.
                const int ox = std::clamp(rand_int(rng, hx - ow / 2, hx + hw - ow / 2), 0, kSceneSize - ow);
                const int oy = std::clamp(rand_int(rng, hy - oh / 2, hy + hh - oh / 2), 0, kSceneSize - oh);
                obj = {static_cast<double>(ox), static_cast<double>(oy), static_cast<double>(ox + ow),
                       static_cast<double>(oy + oh)};
            }
        } else {
            // Distractor: far from the human (Chebyshev gap > 8).
            for (int attempt = 0; attempt < 100; ++attempt) {
                const int ox = rand_int(rng, 0, kSceneSize - ow);
                const int oy = rand_int(rng, 0, kSceneSize - oh);
                obj = {static_cast<double>(ox), static_cast<double>(oy), static_cast<double>(ox + ow),
                       static_cast<double>(oy + oh)};
                const Gap g = box_gap(human, obj);
                if (std::max(g.dx, g.dy) > 8.0) break;
            }
        }
        paint_box(scene.image, obj, 2);
        scene.detections.push_back({obj, kObjectClass, 1.0, DetKind::Object});
        scene.pair_labels.push_back(synthetic_pair_label(human, obj, n_actions));
    }
    scene.agent_labels = TensorF({n_actions});
    return scene;
}

// ---------------------------------------------------------------------------
// Full-model forward/backward on one scene.

namespace {

struct SceneTrace {
    ImageFeatures feats;
    TensorF A;
    StreamImageTrace<float> human_image, object_image;
    StreamBoxTrace<float> human_box;                 // one human per scene
    std::vector<StreamBoxTrace<float>> object_boxes;
    std::vector<PairwiseTrace<float>> pairwise;
    std::vector<TensorF> fused;  // per object
};

SceneTrace scene_forward(const SyntheticScene& scene, const ToyBackboneWeights<float>& backbone,
                         const ModelWeights<float>& model) {
    SceneTrace t;
    t.feats = features_from_toy_backbone("scene", scene.image, backbone);
    t.A = project_features(t.feats.feature_map, model.project);
    t.human_image = stream_image_forward(t.feats.feature_map, model.human);
    t.object_image = stream_image_forward(t.feats.feature_map, model.object);
    const BBox human_fbox = to_feature_coords(scene.detections[0].bbox, t.feats.spatial_stride);
    t.human_box = stream_box_forward(t.human_image, t.A, human_fbox, model.human);
    for (std::size_t j = 1; j < scene.detections.size(); ++j) {
        const BBox fbox = to_feature_coords(scene.detections[j].bbox, t.feats.spatial_stride);
        t.object_boxes.push_back(stream_box_forward(t.object_image, t.A, fbox, model.object));
        const TensorF pattern =
            interaction_pattern<float>(scene.detections[0].bbox, scene.detections[j].bbox);
        t.pairwise.push_back(pairwise_stream(pattern, model.pairwise));
        t.fused.push_back(
            fuse(t.human_box.head.scores, t.object_boxes.back().head.scores, t.pairwise.back().scores));
    }
    return t;
}

// Mean BCE over the supervised scalars: every paired-slot action of every
// fused pair score, plus every agent-slot action of the human stream.
struct SceneLoss {
    double loss = 0;
    std::vector<TensorF> d_fused;  // per object
    TensorF d_human_scores;        // agent-action entries
};

SceneLoss scene_loss(const SceneTrace& t, const SyntheticScene& scene, const ModelConfig& cfg) {
    std::vector<int> paired_actions, agent_actions;
    for (const auto& s : cfg.roles) {
        auto& dst = s.role_id == kRoleAgentOnly ? agent_actions : paired_actions;
        if (std::find(dst.begin(), dst.end(), s.action_id) == dst.end()) dst.push_back(s.action_id);
    }
    std::vector<float> supervised, targets;
    for (std::size_t j = 0; j < t.fused.size(); ++j) {
        for (int a : paired_actions) {
            supervised.push_back(t.fused[j](a));
            targets.push_back(scene.pair_labels[j](a));
        }
    }
    for (int a : agent_actions) {
        supervised.push_back(t.human_box.head.scores(a));
        targets.push_back(scene.agent_labels(a));
    }
    const TensorF scores({static_cast<int>(supervised.size())}, supervised);
    const TensorF labels({static_cast<int>(targets.size())}, targets);
    SceneLoss out;
    out.loss = bce_loss(scores, labels);
    const TensorF d = bce_loss_backward(scores, labels);

    out.d_fused.assign(t.fused.size(), TensorF({cfg.n_actions}));
    out.d_human_scores = TensorF({cfg.n_actions});
    std::size_t k = 0;
    for (std::size_t j = 0; j < t.fused.size(); ++j) {
        for (int a : paired_actions) out.d_fused[j](a) = d(static_cast<int>(k++));
    }
    for (int a : agent_actions) out.d_human_scores(a) = d(static_cast<int>(k++));
    return out;
}

void scene_backward(const SceneTrace& t, const SceneLoss& loss, const ModelWeights<float>& model,
                    ModelWeights<float>& grads) {
    TensorF d_A = zeros_like(t.A);
    TensorF d_score_h = zeros_like(t.human_image.score_maps);
    TensorF d_score_o = zeros_like(t.object_image.score_maps);

    TensorF d_sh = loss.d_human_scores;
    for (std::size_t j = 0; j < t.fused.size(); ++j) {
        const auto fg = fuse_backward(t.human_box.head.scores, t.object_boxes[j].head.scores,
                                      t.pairwise[j].scores, loss.d_fused[j]);
        accumulate(d_sh, fg.s_h);
        const auto pw = pairwise_stream_backward(t.pairwise[j], model.pairwise, fg.s_p);
        accumulate(grads.pairwise.conv1, pw.weights.conv1);
        accumulate(grads.pairwise.conv2, pw.weights.conv2);
        accumulate(grads.pairwise.fc, pw.weights.fc);
        stream_box_backward(t.object_boxes[j], t.A, model.object, fg.s_o, d_score_o, d_A, grads.object);
    }
    stream_box_backward(t.human_box, t.A, model.human, d_sh, d_score_h, d_A, grads.human);
    stream_image_backward(t.feats.feature_map, model.human, t.human_image, d_score_h, grads.human);
    stream_image_backward(t.feats.feature_map, model.object, t.object_image, d_score_o, grads.object);
    auto gp = conv2d_backward(t.feats.feature_map, model.project, d_A);
    accumulate(grads.project, gp.weights);
}

std::vector<TensorF*> collect_params(ModelWeights<float>& w) {
    std::vector<TensorF*> out;
    for_each_param<float>(w, [&out](const std::string&, TensorF& t) { out.push_back(&t); });
    return out;
}

}  // namespace

TrainToyResult train_toy(std::uint64_t seed, int steps, const SgdConfig& sgd) {
    if (steps < 0) throw ValidationError("train_toy: steps must be >= 0");
    sgd.validate();
    TrainToyResult result;
    result.config = toy_model_config();
    std::mt19937 rng(static_cast<std::uint32_t>(seed));
    result.backbone = init_toy_backbone(rng, 8, result.config.feature_channels);
    result.model = init_model(result.config, result.config.feature_channels, rng);

    ModelWeights<float> velocity = model_grads_like(result.model);
    auto params = collect_params(result.model);
    auto vel = collect_params(velocity);

    for (int step = 0; step < steps; ++step) {
        const SyntheticScene scene = make_synthetic_scene(rng, result.config.n_actions, 2);
        const SceneTrace trace = scene_forward(scene, result.backbone, result.model);
        const SceneLoss loss = scene_loss(trace, scene, result.config);
        result.losses.push_back(loss.loss);

        ModelWeights<float> grads = model_grads_like(result.model);
        scene_backward(trace, loss, result.model, grads);
        auto gs = collect_params(grads);
        for (std::size_t i = 0; i < params.size(); ++i) {
            sgd_step(*params[i], *gs[i], *vel[i], sgd);
        }
    }
    return result;
}

RankingEval rank_planted_pairs(const TrainToyResult& trained, std::uint64_t seed, int n_scenes) {
    RankingEval out;
    std::mt19937 rng(static_cast<std::uint32_t>(seed));
    std::vector<int> paired_actions;
    for (const auto& s : trained.config.roles) {
        if (s.role_id != kRoleAgentOnly) paired_actions.push_back(s.action_id);
    }
    for (int i = 0; i < n_scenes; ++i) {
        const SyntheticScene scene = make_synthetic_scene(rng, trained.config.n_actions, 3);
        const SceneTrace trace = scene_forward(scene, trained.backbone, trained.model);
        std::vector<double> rank_score(trace.fused.size(), 0);
        for (std::size_t j = 0; j < trace.fused.size(); ++j) {
            for (int a : paired_actions) {
                rank_score[j] = std::max(rank_score[j], static_cast<double>(trace.fused[j](a)));
            }
        }
        bool first = true;
        for (std::size_t j = 0; j < rank_score.size(); ++j) {
            if (static_cast<int>(j) != scene.planted_object &&
                rank_score[j] >= rank_score[static_cast<std::size_t>(scene.planted_object)]) {
                first = false;
            }
        }
        ++out.scenes;
        if (first) ++out.planted_first;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checking.

FdBlockResult fd_check_block(FdBlock& block, std::mt19937& rng, double step) {
    FdBlockResult result;
    const std::vector<TensorD> grads = block.analytic();
    if (grads.size() != block.params.size()) {
        throw ValidationError("fd_check_block: analytic gradient count mismatch in " + block.name);
    }
    for (std::size_t t = 0; t < block.params.size(); ++t) {
        TensorD& p = *block.params[t];
        std::vector<std::int64_t> coords;
        if (p.size() <= block.max_coords_per_tensor) {
            coords.resize(static_cast<std::size_t>(p.size()));
            std::iota(coords.begin(), coords.end(), 0);
        } else {
            std::uniform_int_distribution<std::int64_t> d(0, p.size() - 1);
            std::set<std::int64_t> picked;
            while (static_cast<int>(picked.size()) < block.max_coords_per_tensor) picked.insert(d(rng));
            coords.assign(picked.begin(), picked.end());
        }
        for (std::int64_t c : coords) {
            const double orig = p[c];
            p[c] = orig + step;
            const FdEval plus = block.eval();
            p[c] = orig - step;
            const FdEval minus = block.eval();
            p[c] = orig;
            if (plus.signature != minus.signature) {
                ++result.skipped;
                continue;
            }
            const double fd = (plus.loss - minus.loss) / (2 * step);
            const double a = grads[t][c];
            const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-4});
            result.max_rel_err = std::max(result.max_rel_err, rel);
            ++result.checked;
        }
    }
    return result;
}

namespace {

TensorD rand_tensor(std::mt19937& rng, std::vector<int> dims, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    TensorD t(std::move(dims));
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = d(rng);
    return t;
}

double weighted_sum(const TensorD& out, const TensorD& direction) {
    double s = 0;
    for (std::int64_t i = 0; i < out.size(); ++i) s += out[i] * direction[i];
    return s;
}

std::vector<TensorD*> conv_params(ConvWeights<double>& w, std::vector<TensorD*> list = {}) {
    list.push_back(&w.kernel);
    list.push_back(&w.bias);
    return list;
}

GradCheckBlockReport run_block(FdBlock& block, std::mt19937& rng, double tolerance) {
    const FdBlockResult r = fd_check_block(block, rng);
    GradCheckBlockReport rep;
    rep.name = block.name;
    rep.max_rel_err = r.max_rel_err;
    rep.checked = r.checked;
    rep.skipped = r.skipped;
    rep.pass = r.checked > 0 && r.max_rel_err <= tolerance;
    return rep;
}

}  // namespace

GradCheckReport gradcheck_all(std::uint64_t seed, double tolerance) {
    GradCheckReport report;
    report.tolerance = tolerance;
    std::mt19937 rng(static_cast<std::uint32_t>(seed));

    {  // context aggregation (factorized large kernel)
        ContextAggWeights<double> w;
        w.a_col = init_conv<double>(rng, 3, 1, 3, 3);
        w.a_row = init_conv<double>(rng, 1, 3, 3, 4);
        w.b_row = init_conv<double>(rng, 1, 3, 3, 3);
        w.b_col = init_conv<double>(rng, 3, 1, 3, 4);
        TensorD input = rand_tensor(rng, {7, 6, 3});
        const TensorD direction = rand_tensor(rng, {7, 6, 4});
        FdBlock block;
        block.name = "context_aggregation";
        block.params = {&input, &w.a_col.kernel, &w.a_col.bias, &w.a_row.kernel, &w.a_row.bias,
                        &w.b_row.kernel, &w.b_row.bias, &w.b_col.kernel, &w.b_col.bias};
        block.eval = [&]() {
            const auto t = context_aggregate(input, w);
            return FdEval{weighted_sum(t.output, direction), 0};
        };
        block.analytic = [&]() {
            const auto t = context_aggregate(input, w);
            const auto g = context_aggregate_backward(input, w, t, direction);
            return std::vector<TensorD>{g.input,          g.weights.a_col.kernel, g.weights.a_col.bias,
                                        g.weights.a_row.kernel, g.weights.a_row.bias,   g.weights.b_row.kernel,
                                        g.weights.b_row.bias,   g.weights.b_col.kernel, g.weights.b_col.bias};
        };
        report.blocks.push_back(run_block(block, rng, tolerance));
    }

    {  // local encoding chain: 1x1 score conv -> PSRoIAlign -> FC -> ReLU
        LocalEncodingWeights<double> w;
        w.grid = 2;
        w.cell_channels = 3;
        w.samples = 2;
        w.score_conv = init_conv<double>(rng, 1, 1, 5, 12);
        w.projection_fc = init_conv<double>(rng, 1, 1, 12, 7);
        TensorD input = rand_tensor(rng, {8, 8, 5});
        const TensorD direction = rand_tensor(rng, {7});
        const BBox box{1.3, 0.7, 6.2, 7.1};
        FdBlock block;
        block.name = "local_encoding";
        block.params = {&input, &w.score_conv.kernel, &w.score_conv.bias, &w.projection_fc.kernel,
                        &w.projection_fc.bias};
        auto forward = [&]() {
            const TensorD maps = conv2d(input, w.score_conv);
            return std::pair<TensorD, LocalEncodingTrace<double>>(maps, encode_box(maps, box, w));
        };
        block.eval = [&]() {
            const auto [maps, trace] = forward();
            SignatureHash sig;
            sig.add_indices(trace.roi.sample_index);
            sig.add_indices(trace.roi.sample_channel);
            sig.add_relu_mask(trace.f_app_pre);
            return FdEval{weighted_sum(trace.f_app, direction), sig.h};
        };
        block.analytic = [&]() {
            const auto [maps, trace] = forward();
            auto grads = local_encoding_grads_like(w);
            TensorD d_maps = zeros_like(maps);
            encode_box_backward(trace, w, direction, d_maps, grads);
            const auto g_conv = conv2d_backward(input, w.score_conv, d_maps);
            return std::vector<TensorD>{g_conv.input, g_conv.weights.kernel, g_conv.weights.bias,
                                        grads.projection_fc.kernel, grads.projection_fc.bias};
        };
        report.blocks.push_back(run_block(block, rng, tolerance));
    }

    {  // attention chain: modulation, spatial and channel refinement
        const int d = 6;
        AttentionWeights<double> w;
        w.heatmap_conv = init_conv<double>(rng, 1, 1, d, 1);
        w.se_reduce = init_conv<double>(rng, 1, 1, d, 3);
        w.se_expand = init_conv<double>(rng, 1, 1, 3, d);
        w.head_fc1 = init_conv<double>(rng, 1, 1, 2 * d, 5);
        w.head_fc2 = init_conv<double>(rng, 1, 1, 5, 4);
        TensorD f_app = rand_tensor(rng, {d}, 0.0, 1.0);
        TensorD A = rand_tensor(rng, {5, 4, d});
        const TensorD direction = rand_tensor(rng, {d});
        FdBlock block;
        block.name = "attention_chain";
        block.params = {&f_app, &A, &w.heatmap_conv.kernel, &w.heatmap_conv.bias, &w.se_reduce.kernel,
                        &w.se_reduce.bias, &w.se_expand.kernel, &w.se_expand.bias};
        block.eval = [&]() {
            const auto trace = attention_forward(f_app, A, w);
            SignatureHash sig;
            sig.add_relu_mask(trace.se_hidden_pre);
            return FdEval{weighted_sum(trace.f_r, direction), sig.h};
        };
        block.analytic = [&]() {
            const auto trace = attention_forward(f_app, A, w);
            auto grads = attention_grads_like(w);
            const auto g = attention_backward(f_app, A, w, trace, direction, grads);
            return std::vector<TensorD>{g.f_app,
                                        g.A,
                                        grads.heatmap_conv.kernel,
                                        grads.heatmap_conv.bias,
                                        grads.se_reduce.kernel,
                                        grads.se_reduce.bias,
                                        grads.se_expand.kernel,
                                        grads.se_expand.bias};
        };
        report.blocks.push_back(run_block(block, rng, tolerance));
    }

    for (const char* head_name : {"action_head_human", "action_head_object"}) {
        const int d = 6;
        AttentionWeights<double> w;
        w.heatmap_conv = init_conv<double>(rng, 1, 1, d, 1);
        w.se_reduce = init_conv<double>(rng, 1, 1, d, 3);
        w.se_expand = init_conv<double>(rng, 1, 1, 3, d);
        w.head_fc1 = init_conv<double>(rng, 1, 1, 2 * d, 5);
        w.head_fc2 = init_conv<double>(rng, 1, 1, 5, 4);
        TensorD f_app = rand_tensor(rng, {d}, 0.0, 1.0);
        TensorD f_r = rand_tensor(rng, {d});
        const TensorD direction = rand_tensor(rng, {4});
        FdBlock block;
        block.name = head_name;
        block.params = {&f_app, &f_r, &w.head_fc1.kernel, &w.head_fc1.bias, &w.head_fc2.kernel, &w.head_fc2.bias};
        block.eval = [&w, &f_app, &f_r, &direction]() {
            const auto trace = action_head(f_app, f_r, w);
            SignatureHash sig;
            sig.add_relu_mask(trace.hidden_pre);
            return FdEval{weighted_sum(trace.scores, direction), sig.h};
        };
        block.analytic = [&w, &f_app, &f_r, &direction]() {
            const auto trace = action_head(f_app, f_r, w);
            auto grads = attention_grads_like(w);
            const auto g = action_head_backward(trace, w, direction, grads);
            return std::vector<TensorD>{g.f_app, g.f_r, grads.head_fc1.kernel, grads.head_fc1.bias,
                                        grads.head_fc2.kernel, grads.head_fc2.bias};
        };
        report.blocks.push_back(run_block(block, rng, tolerance));
    }

    {  // pairwise net at the production architecture
        PairwiseWeights<double> w;
        w.conv1 = init_conv<double>(rng, 5, 5, 2, 16);
        w.conv2 = init_conv<double>(rng, 5, 5, 16, 32);
        const int pooled = kPatternSize / 4;
        w.fc = init_conv<double>(rng, 1, 1, pooled * pooled * 32, 4);
        TensorD pattern = interaction_pattern<double>(BBox{4, 4, 30, 34}, BBox{20, 12, 44, 40});
        const TensorD direction = rand_tensor(rng, {4});
        FdBlock block;
        block.name = "pairwise_net";
        block.max_coords_per_tensor = 10;
        block.params = conv_params(w.fc, conv_params(w.conv2, conv_params(w.conv1, {&pattern})));
        block.eval = [&]() {
            const auto trace = pairwise_stream(pattern, w);
            SignatureHash sig;
            sig.add_relu_mask(trace.pre1);
            sig.add_relu_mask(trace.pre2);
            sig.add_indices(trace.pool1.argmax);
            sig.add_indices(trace.pool2.argmax);
            return FdEval{weighted_sum(trace.scores, direction), sig.h};
        };
        block.analytic = [&]() {
            const auto trace = pairwise_stream(pattern, w);
            const auto g = pairwise_stream_backward(trace, w, direction);
            return std::vector<TensorD>{g.pattern,          g.weights.conv1.kernel, g.weights.conv1.bias,
                                        g.weights.conv2.kernel, g.weights.conv2.bias,   g.weights.fc.kernel,
                                        g.weights.fc.bias};
        };
        report.blocks.push_back(run_block(block, rng, tolerance));
    }

    {  // toy backbone (two stride-2 conv+ReLU stages)
        ToyBackboneWeights<double> w;
        w.conv1 = init_conv<double>(rng, 3, 3, 3, 4);
        w.conv2 = init_conv<double>(rng, 3, 3, 4, 5);
        TensorD image = rand_tensor(rng, {9, 10, 3});
        const TensorD direction = rand_tensor(rng, {3, 3, 5});
        FdBlock block;
        block.name = "toy_backbone";
        block.params = {&image, &w.conv1.kernel, &w.conv1.bias, &w.conv2.kernel, &w.conv2.bias};
        block.eval = [&]() {
            const auto trace = toy_backbone(image, w);
            SignatureHash sig;
            sig.add_relu_mask(trace.pre1);
            sig.add_relu_mask(trace.pre2);
            return FdEval{weighted_sum(trace.features, direction), sig.h};
        };
        block.analytic = [&]() {
            const auto trace = toy_backbone(image, w);
            const auto g = toy_backbone_backward(image, w, trace, direction);
            return std::vector<TensorD>{g.image, g.weights.conv1.kernel, g.weights.conv1.bias,
                                        g.weights.conv2.kernel, g.weights.conv2.bias};
        };
        report.blocks.push_back(run_block(block, rng, tolerance));
    }

    report.all_pass = std::all_of(report.blocks.begin(), report.blocks.end(),
                                  [](const GradCheckBlockReport& b) { return b.pass; });
    return report;
}

std::string gradcheck_report_to_json(const GradCheckReport& report) {
    nlohmann::json j;
    j["tolerance"] = report.tolerance;
    j["all_pass"] = report.all_pass;
    j["blocks"] = nlohmann::json::array();
    for (const auto& b : report.blocks) {
        nlohmann::json jb;
        jb["name"] = b.name;
        jb["max_rel_err"] = b.max_rel_err;
        jb["checked"] = b.checked;
        jb["skipped"] = b.skipped;
        jb["pass"] = b.pass;
        j["blocks"].push_back(std::move(jb));
    }
    return j.dump(2);
}

template void sgd_step<float>(Tensor<float>&, const Tensor<float>&, Tensor<float>&, const SgdConfig&);
template void sgd_step<double>(Tensor<double>&, const Tensor<double>&, Tensor<double>&, const SgdConfig&);
template float bce_loss<float>(const Tensor<float>&, const Tensor<float>&);
template double bce_loss<double>(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> bce_loss_backward<float>(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> bce_loss_backward<double>(const Tensor<double>&, const Tensor<double>&);
template ConvWeights<float> init_conv<float>(std::mt19937&, int, int, int, int);
template ConvWeights<double> init_conv<double>(std::mt19937&, int, int, int, int);

}  // namespace hoi
