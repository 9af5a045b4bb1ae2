#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hoi/pipeline.hpp"

namespace hoi {

struct GroundTruthTriplet {
    std::string image_id;
    BBox human;
    std::optional<BBox> object;  // absent exactly for agent-only roles
    int action_id = 0;
    int role_id = kRoleDirectObject;

    void validate(const std::string& who) const;
};

enum class EvalMode { Default, KnownObject };

struct CategoryDef {
    int action_id = 0;
    int role_id = kRoleDirectObject;
    std::string name;
    std::optional<int> object_class;  // for known-object filtering
};

struct EvalConfig {
    double iou_threshold = 0.5;
    EvalMode mode = EvalMode::Default;
    std::vector<CategoryDef> categories;

    void validate() const;
};

/// area(a intersect b) / area(a union b); symmetric, in [0, 1].
double iou(const BBox& a, const BBox& b);

/// Whether a detection can match a ground truth at the given threshold:
/// same (action, role) and min(iou_human, iou_object) strictly above the
/// threshold (human IoU alone for agent-only roles).
bool match_feasible(const HOITriplet& det, const GroundTruthTriplet& gt, double iou_threshold);

/// Greedy matching for one image. Detections must arrive sorted by
/// descending score; each detection consumes the unconsumed feasible GT with
/// the highest min-IoU (ties: lowest GT index). Returns one TP/FP flag per
/// detection.
std::vector<bool> match_image(const std::vector<HOITriplet>& dets_sorted,
                              const std::vector<GroundTruthTriplet>& gts, const EvalConfig& cfg);

/// All-point interpolated AP: area under the precision envelope of the
/// cumulative PR curve. flags must be ordered by descending score.
double average_precision(const std::vector<bool>& tp_flags, int n_gt);

struct CategoryResult {
    CategoryDef category;
    std::optional<double> ap;  // empty when the category has no GT instances
    int n_gt = 0;
    int tp = 0;
    int fp = 0;
    std::vector<std::pair<double, double>> pr_points;  // (recall, precision) per detection
};

struct EvalResult {
    std::vector<CategoryResult> per_category;
    double mAP = 0;  // unweighted mean over categories with n_gt > 0
};

EvalResult evaluate(const std::vector<HOITriplet>& dets, const std::vector<GroundTruthTriplet>& gts,
                    const EvalConfig& cfg);

struct SweepPoint {
    double threshold = 0;
    double mAP = 0;
};

std::vector<SweepPoint> threshold_sweep(const std::vector<HOITriplet>& dets,
                                        const std::vector<GroundTruthTriplet>& gts, const EvalConfig& base,
                                        const std::vector<double>& thresholds);

/// GT JSON mirrors the detections JSON plus a categories table:
/// {"triplets": [...], "categories": [{"action_id", "role_id", "name",
/// "object_class"|null}]}.
struct GroundTruthFile {
    std::vector<GroundTruthTriplet> triplets;
    std::vector<CategoryDef> categories;
};

GroundTruthFile ground_truth_from_json_file(const std::filesystem::path& path);
std::string ground_truth_to_json(const GroundTruthFile& gt);

std::string eval_result_to_json(const EvalResult& result);
std::string eval_result_table(const EvalResult& result);
std::string sweep_to_json(const std::vector<SweepPoint>& points);
std::string sweep_table(const std::vector<SweepPoint>& points);

}  // namespace hoi
