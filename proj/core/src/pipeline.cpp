#include "hoi/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "json.hpp"

namespace hoi {

using nlohmann::json;

void ModelConfig::validate() const {
    if (n_actions < 1) throw ValidationError("config: n_actions must be >= 1");
    if (feature_channels < 1 || context_channels < 1 || embed_dim < 1 || head_hidden < 1) {
        throw ValidationError("config: channel widths must be >= 1");
    }
    if (kernel_size < 1 || kernel_size % 2 == 0) {
        throw ValidationError("config: kernel_size must be odd and >= 1");
    }
    if (grid_size < 1 || cell_channels < 1 || roi_samples < 1) {
        throw ValidationError("config: grid_size, cell_channels and roi_samples must be >= 1");
    }
    if (se_reduction < 1 || embed_dim / se_reduction < 1) {
        throw ValidationError("config: SE reduction must satisfy D/r >= 1");
    }
    if (human_thresh < 0 || human_thresh > 1 || object_thresh < 0 || object_thresh > 1) {
        throw ValidationError("config: thresholds must be in [0, 1]");
    }
    std::set<std::pair<int, int>> seen;
    for (const auto& slot : roles) {
        if (slot.action_id < 0 || slot.action_id >= n_actions) {
            throw ValidationError("config: role table action_id " + std::to_string(slot.action_id) +
                                  " out of range for n_actions " + std::to_string(n_actions));
        }
        if (slot.role_id != kRoleDirectObject && slot.role_id != kRoleInstrument && slot.role_id != kRoleAgentOnly) {
            throw ValidationError("config: unknown role_id " + std::to_string(slot.role_id));
        }
        if (slot.role_id == kRoleAgentOnly && slot.object_class.has_value()) {
            throw ValidationError("config: agent-only slot for action " + std::to_string(slot.action_id) +
                                  " must not name an object class");
        }
        if (!seen.insert({slot.action_id, slot.role_id}).second) {
            throw ValidationError("config: duplicate (action, role) slot (" + std::to_string(slot.action_id) +
                                  ", " + std::to_string(slot.role_id) + ")");
        }
    }
}

std::vector<ActionRoleSlot> ModelConfig::paired_slots() const {
    std::vector<ActionRoleSlot> out;
    for (const auto& s : roles) {
        if (s.role_id != kRoleAgentOnly) out.push_back(s);
    }
    return out;
}

std::vector<ActionRoleSlot> ModelConfig::agent_slots() const {
    std::vector<ActionRoleSlot> out;
    for (const auto& s : roles) {
        if (s.role_id == kRoleAgentOnly) out.push_back(s);
    }
    return out;
}

namespace {

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.n_actions = j.value("n_actions", c.n_actions);
    c.feature_channels = j.value("feature_channels", c.feature_channels);
    c.context_channels = j.value("context_channels", c.context_channels);
    c.kernel_size = j.value("k", c.kernel_size);
    c.embed_dim = j.value("D", c.embed_dim);
    c.grid_size = j.value("G", c.grid_size);
    c.cell_channels = j.value("E", c.cell_channels);
    c.se_reduction = j.value("r", c.se_reduction);
    c.head_hidden = j.value("head_hidden", c.head_hidden);
    c.roi_samples = j.value("S", c.roi_samples);
    c.human_thresh = j.value("human_thresh", c.human_thresh);
    c.object_thresh = j.value("object_thresh", c.object_thresh);
    if (j.contains("roles")) {
        for (const auto& jr : j["roles"]) {
            ActionRoleSlot s;
            s.action_id = jr.at("action_id").get<int>();
            s.role_id = jr.at("role_id").get<int>();
            s.name = jr.value("name", std::string{});
            if (jr.contains("object_class") && !jr["object_class"].is_null()) {
                s.object_class = jr["object_class"].get<int>();
            }
            c.roles.push_back(std::move(s));
        }
    }
    c.validate();
    return c;
}

}  // namespace

ModelConfig load_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("load_config: cannot open " + path.string());
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw ValidationError("load_config: " + path.string() + " is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

std::string config_to_json(const ModelConfig& cfg) {
    json j;
    j["n_actions"] = cfg.n_actions;
    j["feature_channels"] = cfg.feature_channels;
    j["context_channels"] = cfg.context_channels;
    j["k"] = cfg.kernel_size;
    j["D"] = cfg.embed_dim;
    j["G"] = cfg.grid_size;
    j["E"] = cfg.cell_channels;
    j["r"] = cfg.se_reduction;
    j["head_hidden"] = cfg.head_hidden;
    j["S"] = cfg.roi_samples;
    j["human_thresh"] = cfg.human_thresh;
    j["object_thresh"] = cfg.object_thresh;
    j["roles"] = json::array();
    for (const auto& s : cfg.roles) {
        json jr;
        jr["action_id"] = s.action_id;
        jr["role_id"] = s.role_id;
        jr["name"] = s.name;
        jr["object_class"] = s.object_class.has_value() ? json(*s.object_class) : json(nullptr);
        j["roles"].push_back(jr);
    }
    return j.dump(2);
}

template <typename T>
void PairwiseWeights<T>::validate() const {
    conv1.validate("pairwise conv1");
    conv2.validate("pairwise conv2");
    fc.validate("pairwise fc");
    if (conv1.c_in() != 2) {
        throw ShapeError("pairwise: conv1 must read the 2-channel pattern, got " + conv1.kernel.shape_str());
    }
    if (conv2.c_in() != conv1.c_out()) throw ShapeError("pairwise: conv widths disagree");
    const int pooled = kPatternSize / 4;
    if (fc.c_in() != pooled * pooled * conv2.c_out()) {
        throw ShapeError("pairwise: fc input width " + std::to_string(fc.c_in()) + " must equal " +
                         std::to_string(pooled * pooled * conv2.c_out()));
    }
}

template <typename T>
Tensor<T> interaction_pattern(const BBox& human, const BBox& object) {
    human.validate("interaction_pattern human");
    object.validate("interaction_pattern object");
    const double ux1 = std::min(human.x1, object.x1);
    const double uy1 = std::min(human.y1, object.y1);
    const double ux2 = std::max(human.x2, object.x2);
    const double uy2 = std::max(human.y2, object.y2);
    const double uw = ux2 - ux1, uh = uy2 - uy1;

    Tensor<T> pattern({kPatternSize, kPatternSize, 2});
    for (int r = 0; r < kPatternSize; ++r) {
        const double py = uy1 + (r + 0.5) * uh / kPatternSize;
        for (int c = 0; c < kPatternSize; ++c) {
            const double px = ux1 + (c + 0.5) * uw / kPatternSize;
            if (px >= human.x1 && px <= human.x2 && py >= human.y1 && py <= human.y2) {
                pattern(r, c, 0) = T(1);
            }
            if (px >= object.x1 && px <= object.x2 && py >= object.y1 && py <= object.y2) {
                pattern(r, c, 1) = T(1);
            }
        }
    }
    return pattern;
}

template <typename T>
PairwiseTrace<T> pairwise_stream(const Tensor<T>& pattern, const PairwiseWeights<T>& w) {
    w.validate();
    if (pattern.rank() != 3 || pattern.dim(0) != kPatternSize || pattern.dim(1) != kPatternSize ||
        pattern.dim(2) != 2) {
        throw ShapeError("pairwise_stream: pattern must be [" + std::to_string(kPatternSize) + ", " +
                         std::to_string(kPatternSize) + ", 2], got " + pattern.shape_str());
    }
    PairwiseTrace<T> t;
    t.pattern = pattern;
    t.pre1 = conv2d(pattern, w.conv1);
    t.act1 = relu(t.pre1);
    t.pool1 = max_pool(t.act1, 2, 2);
    t.pre2 = conv2d(t.pool1.output, w.conv2);
    t.act2 = relu(t.pre2);
    t.pool2 = max_pool(t.act2, 2, 2);
    t.flat = flatten(t.pool2.output);
    t.logits = fully_connected(t.flat, w.fc);
    t.scores = sigmoid(t.logits);
    return t;
}

template <typename T>
PairwiseGrads<T> pairwise_stream_backward(const PairwiseTrace<T>& trace, const PairwiseWeights<T>& w,
                                          const Tensor<T>& grad_scores) {
    if (trace.scores.empty()) throw ValidationError("pairwise_stream_backward: called before forward");
    PairwiseGrads<T> g;
    const Tensor<T> d_logits = sigmoid_backward(trace.scores, grad_scores);
    auto gfc = fully_connected_backward(trace.flat, w.fc, d_logits);
    g.weights.fc = std::move(gfc.weights);
    const Tensor<T> d_pool2 = reshape(gfc.input, trace.pool2.output.dims());
    const Tensor<T> d_act2 = max_pool_backward(trace.pool2, trace.act2.dims(), d_pool2);
    const Tensor<T> d_pre2 = relu_backward(trace.pre2, d_act2);
    auto g2 = conv2d_backward(trace.pool1.output, w.conv2, d_pre2);
    g.weights.conv2 = std::move(g2.weights);
    const Tensor<T> d_act1 = max_pool_backward(trace.pool1, trace.act1.dims(), g2.input);
    const Tensor<T> d_pre1 = relu_backward(trace.pre1, d_act1);
    auto g1 = conv2d_backward(trace.pattern, w.conv1, d_pre1);
    g.weights.conv1 = std::move(g1.weights);
    g.pattern = std::move(g1.input);
    return g;
}

template <typename T>
Tensor<T> fuse(const Tensor<T>& s_h, const Tensor<T>& s_o, const Tensor<T>& s_p) {
    if (!s_h.same_shape(s_o) || !s_h.same_shape(s_p)) {
        throw ShapeError("fuse: stream score lengths differ: " + s_h.shape_str() + ", " + s_o.shape_str() + ", " +
                         s_p.shape_str());
    }
    Tensor<T> out(s_h.dims());
    for (std::int64_t i = 0; i < out.size(); ++i) {
        out[i] = std::clamp((s_h[i] + s_o[i]) / T(2) * s_p[i], T(0), T(1));
    }
    return out;
}

template <typename T>
FuseGrads<T> fuse_backward(const Tensor<T>& s_h, const Tensor<T>& s_o, const Tensor<T>& s_p,
                           const Tensor<T>& grad_out) {
    FuseGrads<T> g{Tensor<T>(s_h.dims()), Tensor<T>(s_o.dims()), Tensor<T>(s_p.dims())};
    for (std::int64_t i = 0; i < s_h.size(); ++i) {
        g.s_h[i] = grad_out[i] * s_p[i] / T(2);
        g.s_o[i] = grad_out[i] * s_p[i] / T(2);
        g.s_p[i] = grad_out[i] * (s_h[i] + s_o[i]) / T(2);
    }
    return g;
}

template <typename T>
void StreamWeights<T>::validate() const {
    context.validate();
    local.validate();
    attention.validate();
    if (local.score_conv.c_in() != context.a_row.c_out()) {
        throw ShapeError("stream: score_conv c_in " + std::to_string(local.score_conv.c_in()) +
                         " must match context aggregation c_out " + std::to_string(context.a_row.c_out()));
    }
    if (local.projection_fc.c_out() != attention.embed_dim()) {
        throw ShapeError("stream: f_app width " + std::to_string(local.projection_fc.c_out()) +
                         " must match attention D " + std::to_string(attention.embed_dim()));
    }
}

template <typename T>
void ModelWeights<T>::validate() const {
    project.validate("projection");
    human.validate();
    object.validate();
    pairwise.validate();
    if (project.c_out() != human.attention.embed_dim() || project.c_out() != object.attention.embed_dim()) {
        throw ShapeError("model: projection width must match both streams' attention D");
    }
    if (human.context.a_col.c_in() != project.c_in() || object.context.a_col.c_in() != project.c_in()) {
        throw ShapeError("model: both streams and the projection must read the same feature channels");
    }
}

template <typename T>
void ModelWeights<T>::validate_against(const ModelConfig& cfg, int feature_channels) const {
    validate();
    auto expect = [](int got, int want, const std::string& what) {
        if (got != want) {
            throw ValidationError("configuration error: " + what + " is " + std::to_string(got) +
                                  " but config requires " + std::to_string(want));
        }
    };
    expect(project.c_in(), feature_channels, "projection c_in");
    expect(project.c_out(), cfg.embed_dim, "projection width D");
    for (const StreamWeights<T>* s : {&human, &object}) {
        expect(s->context.a_col.c_in(), feature_channels, "context aggregation c_in");
        expect(s->context.a_row.c_out(), cfg.context_channels, "context aggregation c_out");
        expect(s->context.a_col.kh(), cfg.kernel_size, "context kernel extent k");
        expect(s->local.grid, cfg.grid_size, "local encoding grid G");
        expect(s->local.cell_channels, cfg.cell_channels, "local encoding E");
        expect(s->local.projection_fc.c_out(), cfg.embed_dim, "f_app width D");
        expect(s->attention.se_reduce.c_out(), std::max(1, cfg.embed_dim / cfg.se_reduction), "SE bottleneck D/r");
        expect(s->attention.head_fc1.c_out(), cfg.head_hidden, "head hidden width");
        expect(s->attention.head_fc2.c_out(), cfg.n_actions, "head n_actions");
    }
    expect(pairwise.fc.c_out(), cfg.n_actions, "pairwise n_actions");
}

template <typename T>
StreamImageTrace<T> stream_image_forward(const Tensor<T>& features, const StreamWeights<T>& w) {
    StreamImageTrace<T> t;
    t.ctx = context_aggregate(features, w.context);
    t.score_maps = conv2d(t.ctx.output, w.local.score_conv);
    return t;
}

template <typename T>
StreamBoxTrace<T> stream_box_forward(const StreamImageTrace<T>& image, const Tensor<T>& A,
                                     const BBox& box_feature_coords, const StreamWeights<T>& w) {
    StreamBoxTrace<T> t;
    t.local = encode_box(image.score_maps, box_feature_coords, w.local);
    t.attn = attention_forward(t.local.f_app, A, w.attention);
    t.head = action_head(t.local.f_app, t.attn.f_r, w.attention);
    return t;
}

template <typename T>
void stream_box_backward(const StreamBoxTrace<T>& trace, const Tensor<T>& A, const StreamWeights<T>& w,
                         const Tensor<T>& grad_scores, Tensor<T>& grad_score_maps, Tensor<T>& grad_A,
                         StreamWeights<T>& grads) {
    auto head_g = action_head_backward(trace.head, w.attention, grad_scores, grads.attention);
    auto attn_g = attention_backward(trace.local.f_app, A, w.attention, trace.attn, head_g.f_r, grads.attention);
    accumulate(grad_A, attn_g.A);
    Tensor<T> d_f_app = std::move(head_g.f_app);
    accumulate(d_f_app, attn_g.f_app);
    encode_box_backward(trace.local, w.local, d_f_app, grad_score_maps, grads.local);
}

template <typename T>
void stream_image_backward(const Tensor<T>& features, const StreamWeights<T>& w, const StreamImageTrace<T>& trace,
                           const Tensor<T>& grad_score_maps, StreamWeights<T>& grads) {
    auto g_score = conv2d_backward(trace.ctx.output, w.local.score_conv, grad_score_maps);
    accumulate(grads.local.score_conv, g_score.weights);
    auto g_ctx = context_aggregate_backward(features, w.context, trace.ctx, g_score.input);
    accumulate(grads.context.a_col, g_ctx.weights.a_col);
    accumulate(grads.context.a_row, g_ctx.weights.a_row);
    accumulate(grads.context.b_row, g_ctx.weights.b_row);
    accumulate(grads.context.b_col, g_ctx.weights.b_col);
}

template <typename T>
StreamWeights<T> stream_grads_like(const StreamWeights<T>& w) {
    StreamWeights<T> g;
    g.context.a_col = zeros_like(w.context.a_col);
    g.context.a_row = zeros_like(w.context.a_row);
    g.context.b_row = zeros_like(w.context.b_row);
    g.context.b_col = zeros_like(w.context.b_col);
    g.local = local_encoding_grads_like(w.local);
    g.attention = attention_grads_like(w.attention);
    return g;
}

template <typename T>
PairwiseWeights<T> pairwise_grads_like(const PairwiseWeights<T>& w) {
    PairwiseWeights<T> g;
    g.conv1 = zeros_like(w.conv1);
    g.conv2 = zeros_like(w.conv2);
    g.fc = zeros_like(w.fc);
    return g;
}

template <typename T>
ModelWeights<T> model_grads_like(const ModelWeights<T>& w) {
    ModelWeights<T> g;
    g.project = zeros_like(w.project);
    g.human = stream_grads_like(w.human);
    g.object = stream_grads_like(w.object);
    g.pairwise = pairwise_grads_like(w.pairwise);
    return g;
}

template <typename T>
void for_each_param(ModelWeights<T>& w, const std::function<void(const std::string&, Tensor<T>&)>& fn) {
    auto conv = [&fn](const std::string& name, ConvWeights<T>& c) {
        fn(name + ".kernel", c.kernel);
        fn(name + ".bias", c.bias);
    };
    conv("project", w.project);
    const std::pair<std::string, StreamWeights<T>*> streams[] = {{"human", &w.human}, {"object", &w.object}};
    for (auto& [prefix, s] : streams) {
        conv(prefix + ".context.a_col", s->context.a_col);
        conv(prefix + ".context.a_row", s->context.a_row);
        conv(prefix + ".context.b_row", s->context.b_row);
        conv(prefix + ".context.b_col", s->context.b_col);
        conv(prefix + ".local.score_conv", s->local.score_conv);
        conv(prefix + ".local.projection_fc", s->local.projection_fc);
        conv(prefix + ".attention.heatmap_conv", s->attention.heatmap_conv);
        conv(prefix + ".attention.se_reduce", s->attention.se_reduce);
        conv(prefix + ".attention.se_expand", s->attention.se_expand);
        conv(prefix + ".attention.head_fc1", s->attention.head_fc1);
        conv(prefix + ".attention.head_fc2", s->attention.head_fc2);
    }
    conv("pairwise.conv1", w.pairwise.conv1);
    conv("pairwise.conv2", w.pairwise.conv2);
    conv("pairwise.fc", w.pairwise.fc);
}

void HOITriplet::validate(const std::string& who) const {
    human.validate(who + " human box");
    if (role_id == kRoleAgentOnly) {
        if (object.has_value()) throw ValidationError(who + ": agent-only triplet must not carry an object box");
    } else {
        if (!object.has_value()) throw ValidationError(who + ": paired triplet must carry an object box");
        object->validate(who + " object box");
    }
    if (score < 0 || score > 1 || !std::isfinite(score)) {
        throw ValidationError(who + ": triplet score must be in [0, 1]");
    }
}

namespace {

json box_to_json(const BBox& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

BBox box_from_json(const json& j, const std::string& who) {
    if (!j.is_array() || j.size() != 4) throw ValidationError(who + ": box must be [x1, y1, x2, y2]");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

}  // namespace

std::string detections_to_json(const std::vector<HOITriplet>& triplets) {
    json out;
    out["triplets"] = json::array();
    for (const auto& t : triplets) {
        json jt;
        jt["image_id"] = t.image_id;
        jt["human_box"] = box_to_json(t.human);
        jt["object_box"] = t.object.has_value() ? box_to_json(*t.object) : json(nullptr);
        jt["action_id"] = t.action_id;
        jt["role_id"] = t.role_id;
        jt["score"] = t.score;
        out["triplets"].push_back(std::move(jt));
    }
    return out.dump(2);
}

std::vector<HOITriplet> detections_from_json_file(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("detections_from_json_file: cannot open " + path.string());
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw ValidationError("detections: " + path.string() + " is not valid JSON: " + e.what());
    }
    std::vector<HOITriplet> out;
    if (!j.contains("triplets") || !j["triplets"].is_array()) {
        throw ValidationError("detections: " + path.string() + " lacks a \"triplets\" array");
    }
    int n = 0;
    for (const auto& jt : j["triplets"]) {
        HOITriplet t;
        const std::string who = "triplet " + std::to_string(n++);
        t.image_id = jt.at("image_id").get<std::string>();
        t.human = box_from_json(jt.at("human_box"), who);
        if (jt.contains("object_box") && !jt["object_box"].is_null()) {
            t.object = box_from_json(jt["object_box"], who);
        }
        t.action_id = jt.at("action_id").get<int>();
        t.role_id = jt.at("role_id").get<int>();
        t.score = jt.value("score", 0.0);
        t.validate(who);
        out.push_back(std::move(t));
    }
    return out;
}

std::vector<HOITriplet> detect(const ImageFeatures& features, const std::vector<InstanceDetection>& detections,
                               const ModelWeights<float>& weights, const ModelConfig& cfg,
                               std::vector<AttentionMapExport>* attn_export) {
    cfg.validate();
    features.validate();
    weights.validate_against(cfg, features.feature_map.dim(2));

    std::vector<const InstanceDetection*> humans, objects;
    for (const auto& d : detections) {
        (d.kind == DetKind::Human ? humans : objects).push_back(&d);
    }
    if (humans.empty()) return {};

    const auto paired = cfg.paired_slots();
    const auto agents = cfg.agent_slots();

    const TensorF A = project_features(features.feature_map, weights.project);

    const StreamImageTrace<float> human_image = stream_image_forward(features.feature_map, weights.human);
    StreamImageTrace<float> object_image;
    if (!objects.empty() && !paired.empty()) {
        object_image = stream_image_forward(features.feature_map, weights.object);
    }

    auto box_scores = [&](const StreamImageTrace<float>& image, const StreamWeights<float>& sw,
                          const InstanceDetection& det, DetKind kind, int index) {
        const BBox fbox = to_feature_coords(det.bbox, features.spatial_stride);
        StreamBoxTrace<float> trace = stream_box_forward(image, A, fbox, sw);
        if (attn_export != nullptr) {
            attn_export->push_back(
                AttentionMapExport{features.id, kind, index, trace.attn.attn_map, trace.attn.heatmap_norm});
        }
        return trace.head.scores;
    };

    std::vector<TensorF> s_h(humans.size());
    for (std::size_t i = 0; i < humans.size(); ++i) {
        s_h[i] = box_scores(human_image, weights.human, *humans[i], DetKind::Human, static_cast<int>(i));
    }
    std::vector<TensorF> s_o(objects.size());
    if (!paired.empty()) {
        for (std::size_t j = 0; j < objects.size(); ++j) {
            s_o[j] = box_scores(object_image, weights.object, *objects[j], DetKind::Object, static_cast<int>(j));
        }
    }

    std::vector<HOITriplet> out;
    out.reserve(humans.size() * objects.size() * paired.size() + humans.size() * agents.size());
    for (std::size_t i = 0; i < humans.size(); ++i) {
        for (std::size_t j = 0; j < objects.size(); ++j) {
            if (paired.empty()) continue;
            const TensorF pattern = interaction_pattern<float>(humans[i]->bbox, objects[j]->bbox);
            const TensorF s_p = pairwise_stream(pattern, weights.pairwise).scores;
            const TensorF fused = fuse(s_h[i], s_o[j], s_p);
            if (!fused.all_finite()) {
                throw NumericError("detect: non-finite fused score for image \"" + features.id + "\"");
            }
            for (const auto& slot : paired) {
                HOITriplet t;
                t.image_id = features.id;
                t.human = humans[i]->bbox;
                t.object = objects[j]->bbox;
                t.action_id = slot.action_id;
                t.role_id = slot.role_id;
                t.score = static_cast<double>(fused(slot.action_id));
                out.push_back(std::move(t));
            }
        }
    }
    for (std::size_t i = 0; i < humans.size(); ++i) {
        if (!s_h[i].all_finite()) {
            throw NumericError("detect: non-finite human-stream score for image \"" + features.id + "\"");
        }
        for (const auto& slot : agents) {
            HOITriplet t;
            t.image_id = features.id;
            t.human = humans[i]->bbox;
            t.action_id = slot.action_id;
            t.role_id = slot.role_id;
            t.score = static_cast<double>(s_h[i](slot.action_id));
            out.push_back(std::move(t));
        }
    }
    return out;
}

#define HOI_INSTANTIATE_PIPELINE(T)                                                                          \
    template struct PairwiseWeights<T>;                                                                      \
    template struct StreamWeights<T>;                                                                        \
    template struct ModelWeights<T>;                                                                         \
    template Tensor<T> interaction_pattern<T>(const BBox&, const BBox&);                                     \
    template PairwiseTrace<T> pairwise_stream<T>(const Tensor<T>&, const PairwiseWeights<T>&);               \
    template PairwiseGrads<T> pairwise_stream_backward<T>(const PairwiseTrace<T>&, const PairwiseWeights<T>&, \
                                                          const Tensor<T>&);                                 \
    template Tensor<T> fuse<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                        \
    template FuseGrads<T> fuse_backward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,             \
                                           const Tensor<T>&);                                                \
    template StreamImageTrace<T> stream_image_forward<T>(const Tensor<T>&, const StreamWeights<T>&);         \
    template StreamBoxTrace<T> stream_box_forward<T>(const StreamImageTrace<T>&, const Tensor<T>&,           \
                                                     const BBox&, const StreamWeights<T>&);                  \
    template void stream_box_backward<T>(const StreamBoxTrace<T>&, const Tensor<T>&, const StreamWeights<T>&, \
                                         const Tensor<T>&, Tensor<T>&, Tensor<T>&, StreamWeights<T>&);       \
    template void stream_image_backward<T>(const Tensor<T>&, const StreamWeights<T>&,                        \
                                           const StreamImageTrace<T>&, const Tensor<T>&, StreamWeights<T>&); \
    template StreamWeights<T> stream_grads_like<T>(const StreamWeights<T>&);                                 \
    template PairwiseWeights<T> pairwise_grads_like<T>(const PairwiseWeights<T>&);                           \
    template ModelWeights<T> model_grads_like<T>(const ModelWeights<T>&);                                    \
    template void for_each_param<T>(ModelWeights<T>&,                                                        \
                                    const std::function<void(const std::string&, Tensor<T>&)>&);

HOI_INSTANTIATE_PIPELINE(float)
HOI_INSTANTIATE_PIPELINE(double)

#undef HOI_INSTANTIATE_PIPELINE

}  // namespace hoi
