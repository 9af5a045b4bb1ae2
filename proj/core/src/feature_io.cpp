#include "hoi/feature_io.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "hoi/ops.hpp"
#include "hoi/serialize.hpp"
#include "json.hpp"

namespace hoi {

void BBox::validate(const std::string& who) const {
    if (!std::isfinite(x1) || !std::isfinite(y1) || !std::isfinite(x2) || !std::isfinite(y2)) {
        throw ValidationError(who + ": box coordinates must be finite");
    }
    if (x1 < 0 || y1 < 0) throw ValidationError(who + ": box coordinates must be >= 0");
    if (x2 <= x1 || y2 <= y1) {
        throw ValidationError(who + ": box must have positive extent, got [" + std::to_string(x1) + ", " +
                              std::to_string(y1) + ", " + std::to_string(x2) + ", " + std::to_string(y2) + "]");
    }
}

void InstanceDetection::validate(const std::string& who) const {
    bbox.validate(who);
    if (score < 0 || score > 1 || !std::isfinite(score)) {
        throw ValidationError(who + ": detection score must be in [0, 1]");
    }
}

void ImageFeatures::validate() const {
    if (feature_map.rank() != 3) {
        throw ValidationError("features '" + id + "': feature map must be rank 3 [h, w, c], got " +
                              feature_map.shape_str());
    }
    if (spatial_stride < 1) throw ValidationError("features '" + id + "': stride must be >= 1");
    if (image_width < 1 || image_height < 1) {
        throw ValidationError("features '" + id + "': image dims must be positive");
    }
    const int want_h = (image_height + spatial_stride - 1) / spatial_stride;
    const int want_w = (image_width + spatial_stride - 1) / spatial_stride;
    if (std::abs(feature_map.dim(0) - want_h) > 1 || std::abs(feature_map.dim(1) - want_w) > 1) {
        throw ValidationError("features '" + id + "': map extents " + feature_map.shape_str() +
                              " inconsistent with image " + std::to_string(image_width) + "x" +
                              std::to_string(image_height) + " at stride " + std::to_string(spatial_stride));
    }
}

BBox to_feature_coords(const BBox& b, int spatial_stride) {
    const double s = static_cast<double>(spatial_stride);
    return {b.x1 / s, b.y1 / s, b.x2 / s, b.y2 / s};
}

BBox to_image_coords(const BBox& b, int spatial_stride) {
    const double s = static_cast<double>(spatial_stride);
    return {b.x1 * s, b.y1 * s, b.x2 * s, b.y2 * s};
}

namespace {

using nlohmann::json;

InstanceDetection detection_from_json(const json& j, const std::string& who) {
    InstanceDetection d;
    const auto& box = j.at("box");
    if (!box.is_array() || box.size() != 4) throw ValidationError(who + ": 'box' must be [x1, y1, x2, y2]");
    d.bbox = {box[0].get<double>(), box[1].get<double>(), box[2].get<double>(), box[3].get<double>()};
    d.class_id = j.at("class_id").get<int>();
    d.score = j.at("score").get<double>();
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "human") {
        d.kind = DetKind::Human;
    } else if (kind == "object") {
        d.kind = DetKind::Object;
    } else {
        throw ValidationError(who + ": detection kind must be \"human\" or \"object\", got \"" + kind + "\"");
    }
    d.validate(who);
    return d;
}

// kind must be consistent with class_id: all humans share one class id and
// no object reuses it.
void check_kind_class_consistency(const std::vector<InstanceDetection>& dets, const std::string& who) {
    int human_class = -1;
    for (const auto& d : dets) {
        if (d.kind == DetKind::Human) {
            if (human_class == -1) human_class = d.class_id;
            if (d.class_id != human_class) {
                throw ValidationError(who + ": human detections use conflicting class ids " +
                                      std::to_string(human_class) + " and " + std::to_string(d.class_id));
            }
        }
    }
    if (human_class == -1) return;
    for (const auto& d : dets) {
        if (d.kind == DetKind::Object && d.class_id == human_class) {
            throw ValidationError(who + ": object detection uses the human class id " +
                                  std::to_string(human_class));
        }
    }
}

}  // namespace

Manifest load_manifest(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("load_manifest: cannot open " + path.string());
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw ValidationError("load_manifest: " + path.string() + " is not valid JSON: " + e.what());
    }
    Manifest m;
    m.base_dir = path.parent_path();
    if (!j.contains("images") || !j["images"].is_array()) {
        throw ValidationError("load_manifest: " + path.string() + " lacks an \"images\" array");
    }
    std::set<std::string> seen;
    for (const auto& ji : j["images"]) {
        ManifestImage img;
        img.id = ji.at("id").get<std::string>();
        if (!seen.insert(img.id).second) {
            throw ValidationError("load_manifest: duplicate image id \"" + img.id + "\"");
        }
        img.features_file = ji.at("features").get<std::string>();
        img.stride = ji.at("stride").get<int>();
        img.width = ji.at("width").get<int>();
        img.height = ji.at("height").get<int>();
        if (ji.contains("detections")) {
            int n = 0;
            for (const auto& jd : ji["detections"]) {
                img.detections.push_back(
                    detection_from_json(jd, "image \"" + img.id + "\" detection " + std::to_string(n)));
                ++n;
            }
        }
        check_kind_class_consistency(img.detections, "image \"" + img.id + "\"");
        m.images.push_back(std::move(img));
    }
    return m;
}

ImageFeatures load_features(const ManifestImage& entry, const std::filesystem::path& base_dir) {
    ImageFeatures feats;
    feats.id = entry.id;
    feats.image_width = entry.width;
    feats.image_height = entry.height;
    feats.spatial_stride = entry.stride;
    feats.feature_map = load_tensor<float>(base_dir / entry.features_file);
    feats.validate();
    return feats;
}

void save_features(const std::filesystem::path& path, const TensorF& feature_map) {
    if (feature_map.rank() != 3) {
        throw ValidationError("save_features: feature map must be rank 3, got " + feature_map.shape_str());
    }
    save_tensor(path, feature_map);
}

std::vector<InstanceDetection> filter_detections(const std::vector<InstanceDetection>& dets, double human_thresh,
                                                 double object_thresh) {
    if (human_thresh < 0 || human_thresh > 1 || object_thresh < 0 || object_thresh > 1) {
        throw ValidationError("filter_detections: thresholds must be in [0, 1]");
    }
    std::vector<InstanceDetection> kept;
    kept.reserve(dets.size());
    for (const auto& d : dets) {
        const double thresh = d.kind == DetKind::Human ? human_thresh : object_thresh;
        if (d.score > thresh) kept.push_back(d);
    }
    return kept;
}

template <typename T>
ToyBackboneTrace<T> toy_backbone(const Tensor<T>& image, const ToyBackboneWeights<T>& w) {
    if (image.rank() != 3 || image.dim(2) != w.conv1.c_in()) {
        throw ShapeError("toy_backbone: image " + image.shape_str() + " does not match conv1 kernel " +
                         w.conv1.kernel.shape_str());
    }
    ToyBackboneTrace<T> t;
    t.pre1 = conv2d(image, w.conv1, 2);
    t.act1 = relu(t.pre1);
    t.pre2 = conv2d(t.act1, w.conv2, 2);
    t.features = relu(t.pre2);
    return t;
}

template <typename T>
ToyBackboneGrads<T> toy_backbone_backward(const Tensor<T>& image, const ToyBackboneWeights<T>& w,
                                          const ToyBackboneTrace<T>& trace, const Tensor<T>& grad_features) {
    if (trace.features.empty()) throw ValidationError("toy_backbone_backward: called before forward");
    ToyBackboneGrads<T> g;
    const Tensor<T> d_pre2 = relu_backward(trace.pre2, grad_features);
    auto g2 = conv2d_backward(trace.act1, w.conv2, d_pre2, 2);
    const Tensor<T> d_pre1 = relu_backward(trace.pre1, g2.input);
    auto g1 = conv2d_backward(image, w.conv1, d_pre1, 2);
    g.image = std::move(g1.input);
    g.weights.conv1 = std::move(g1.weights);
    g.weights.conv2 = std::move(g2.weights);
    return g;
}

ImageFeatures features_from_toy_backbone(const std::string& id, const TensorF& image,
                                         const ToyBackboneWeights<float>& w) {
    ImageFeatures feats;
    feats.id = id;
    feats.image_height = image.dim(0);
    feats.image_width = image.dim(1);
    feats.spatial_stride = 4;
    feats.feature_map = toy_backbone(image, w).features;
    feats.validate();
    return feats;
}

template ToyBackboneTrace<float> toy_backbone<float>(const Tensor<float>&, const ToyBackboneWeights<float>&);
template ToyBackboneTrace<double> toy_backbone<double>(const Tensor<double>&, const ToyBackboneWeights<double>&);
template ToyBackboneGrads<float> toy_backbone_backward<float>(const Tensor<float>&, const ToyBackboneWeights<float>&,
                                                              const ToyBackboneTrace<float>&, const Tensor<float>&);
template ToyBackboneGrads<double> toy_backbone_backward<double>(const Tensor<double>&,
                                                                const ToyBackboneWeights<double>&,
                                                                const ToyBackboneTrace<double>&,
                                                                const Tensor<double>&);

}  // namespace hoi
