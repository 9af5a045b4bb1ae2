#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hoi/tensor.hpp"

namespace hoi {

/// Axis-aligned box in image-pixel coordinates.
struct BBox {
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

    double width() const { return x2 - x1; }
    double height() const { return y2 - y1; }
    double area() const { return width() * height(); }

    void validate(const std::string& who) const;
};

enum class DetKind { Human, Object };

struct InstanceDetection {
    BBox bbox;
    int class_id = 0;
    double score = 0;  // detector confidence in [0, 1]
    DetKind kind = DetKind::Object;

    void validate(const std::string& who) const;
};

/// Precomputed backbone feature map for one image plus the geometry binding
/// it to pixel space. Boxes convert to feature coordinates by dividing by
/// spatial_stride (float, no rounding).
struct ImageFeatures {
    std::string id;
    TensorF feature_map;  // [h, w, c_in]
    int image_width = 0;
    int image_height = 0;
    int spatial_stride = 1;

    void validate() const;
};

BBox to_feature_coords(const BBox& image_box, int spatial_stride);
BBox to_image_coords(const BBox& feature_box, int spatial_stride);

struct ManifestImage {
    std::string id;
    std::string features_file;  // relative to the manifest's directory
    int stride = 1;
    int width = 0;
    int height = 0;
    std::vector<InstanceDetection> detections;
};

struct Manifest {
    std::filesystem::path base_dir;
    std::vector<ManifestImage> images;
};

/// Manifest JSON: {"images": [{"id", "features", "stride", "width",
/// "height", "detections": [{"box": [x1,y1,x2,y2], "class_id", "score",
/// "kind": "human"|"object"}]}]}.
Manifest load_manifest(const std::filesystem::path& path);

/// Loads and validates the HOIT feature file bound to a manifest entry.
ImageFeatures load_features(const ManifestImage& entry, const std::filesystem::path& base_dir);

void save_features(const std::filesystem::path& path, const TensorF& feature_map);

/// Keeps humans with score strictly above human_thresh and objects strictly
/// above object_thresh, preserving input order.
std::vector<InstanceDetection> filter_detections(const std::vector<InstanceDetection>& dets, double human_thresh,
                                                 double object_thresh);

/// Test substitute for the real backbone: two stride-2 conv+ReLU stages
/// yielding stride-4 features.
template <typename T>
struct ToyBackboneWeights {
    ConvWeights<T> conv1;  // 3x3, 3 -> mid
    ConvWeights<T> conv2;  // 3x3, mid -> out
};

template <typename T>
struct ToyBackboneTrace {
    Tensor<T> pre1, act1, pre2, features;
};

template <typename T>
ToyBackboneTrace<T> toy_backbone(const Tensor<T>& image, const ToyBackboneWeights<T>& w);

template <typename T>
struct ToyBackboneGrads {
    Tensor<T> image;
    ToyBackboneWeights<T> weights;
};

template <typename T>
ToyBackboneGrads<T> toy_backbone_backward(const Tensor<T>& image, const ToyBackboneWeights<T>& w,
                                          const ToyBackboneTrace<T>& trace, const Tensor<T>& grad_features);

ImageFeatures features_from_toy_backbone(const std::string& id, const TensorF& image,
                                         const ToyBackboneWeights<float>& w);

}  // namespace hoi
