#include "hoi/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

namespace hoi {

using nlohmann::json;

void GroundTruthTriplet::validate(const std::string& who) const {
    human.validate(who + " human box");
    if (role_id == kRoleAgentOnly) {
        if (object.has_value()) throw ValidationError(who + ": agent-only GT must not carry an object box");
    } else {
        if (!object.has_value()) throw ValidationError(who + ": paired GT must carry an object box");
        object->validate(who + " object box");
    }
}

void EvalConfig::validate() const {
    if (!(iou_threshold > 0) || iou_threshold > 1) {
        throw ValidationError("eval config: IoU threshold must be in (0, 1]");
    }
    std::set<std::pair<int, int>> seen;
    for (const auto& c : categories) {
        if (!seen.insert({c.action_id, c.role_id}).second) {
            throw ValidationError("eval config: duplicate category (" + std::to_string(c.action_id) + ", " +
                                  std::to_string(c.role_id) + ")");
        }
    }
}

double iou(const BBox& a, const BBox& b) {
    const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
    const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
    if (iw <= 0 || ih <= 0) return 0;
    const double inter = iw * ih;
    return inter / (a.area() + b.area() - inter);
}

namespace {

// min(iou_h, iou_o) for paired roles, iou_h for agent-only; -1 when the
// category keys disagree.
double match_overlap(const HOITriplet& det, const GroundTruthTriplet& gt) {
    if (det.action_id != gt.action_id || det.role_id != gt.role_id) return -1;
    const double iou_h = iou(det.human, gt.human);
    if (det.role_id == kRoleAgentOnly) return iou_h;
    if (!det.object.has_value() || !gt.object.has_value()) return -1;
    return std::min(iou_h, iou(*det.object, *gt.object));
}

}  // namespace

bool match_feasible(const HOITriplet& det, const GroundTruthTriplet& gt, double iou_threshold) {
    return match_overlap(det, gt) > iou_threshold;
}

std::vector<bool> match_image(const std::vector<HOITriplet>& dets_sorted,
                              const std::vector<GroundTruthTriplet>& gts, const EvalConfig& cfg) {
    for (std::size_t i = 0; i < gts.size(); ++i) {
        for (std::size_t j = i + 1; j < gts.size(); ++j) {
            const auto& a = gts[i];
            const auto& b = gts[j];
            const bool same_object =
                (!a.object.has_value() && !b.object.has_value()) ||
                (a.object.has_value() && b.object.has_value() && a.object->x1 == b.object->x1 &&
                 a.object->y1 == b.object->y1 && a.object->x2 == b.object->x2 && a.object->y2 == b.object->y2);
            if (a.action_id == b.action_id && a.role_id == b.role_id && a.human.x1 == b.human.x1 &&
                a.human.y1 == b.human.y1 && a.human.x2 == b.human.x2 && a.human.y2 == b.human.y2 && same_object) {
                throw ValidationError("match_image: duplicate ground-truth entries (" + std::to_string(i) +
                                      " and " + std::to_string(j) + ")");
            }
        }
    }
    std::vector<bool> consumed(gts.size(), false);
    std::vector<bool> flags(dets_sorted.size(), false);
    for (std::size_t d = 0; d < dets_sorted.size(); ++d) {
        double best = -1;
        std::size_t best_gt = gts.size();
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (consumed[g]) continue;
            const double ov = match_overlap(dets_sorted[d], gts[g]);
            if (ov > cfg.iou_threshold && ov > best) {
                best = ov;
                best_gt = g;
            }
        }
        if (best_gt < gts.size()) {
            consumed[best_gt] = true;
            flags[d] = true;
        }
    }
    return flags;
}

double average_precision(const std::vector<bool>& tp_flags, int n_gt) {
    if (n_gt <= 0) throw ValidationError("average_precision: n_gt must be positive");
    const std::size_t n = tp_flags.size();
    if (n == 0) return 0;
    std::vector<double> precision(n), recall(n);
    int tp = 0;
    for (std::size_t i = 0; i < n; ++i) {
        tp += tp_flags[i] ? 1 : 0;
        precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
        recall[i] = static_cast<double>(tp) / n_gt;
    }
    // Precision envelope: max precision at recall >= r.
    for (std::size_t i = n - 1; i-- > 0;) {
        precision[i] = std::max(precision[i], precision[i + 1]);
    }
    double ap = 0, prev_recall = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (tp_flags[i]) {
            ap += (recall[i] - prev_recall) * precision[i];
            prev_recall = recall[i];
        }
    }
    return ap;
}

namespace {

struct IndexedDet {
    const HOITriplet* det;
    std::size_t input_index;  // stable tie-break for equal scores
};

bool det_order(const IndexedDet& a, const IndexedDet& b) {
    if (a.det->score != b.det->score) return a.det->score > b.det->score;
    return a.input_index < b.input_index;
}

}  // namespace

EvalResult evaluate(const std::vector<HOITriplet>& dets, const std::vector<GroundTruthTriplet>& gts,
                    const EvalConfig& cfg) {
    cfg.validate();
    for (std::size_t i = 0; i < dets.size(); ++i) dets[i].validate("detection " + std::to_string(i));
    for (std::size_t i = 0; i < gts.size(); ++i) gts[i].validate("ground truth " + std::to_string(i));

    // Known-object mode: per category, only images whose GT contains that
    // category's object class participate. An image's known classes are
    // derived from the classes of the categories its GT triplets belong to.
    std::map<std::pair<int, int>, const CategoryDef*> cat_by_key;
    for (const auto& c : cfg.categories) cat_by_key[{c.action_id, c.role_id}] = &c;

    std::map<std::string, std::set<int>> known_classes;
    std::map<std::string, std::set<std::pair<int, int>>> known_categories;
    for (const auto& g : gts) {
        known_categories[g.image_id].insert({g.action_id, g.role_id});
        auto it = cat_by_key.find({g.action_id, g.role_id});
        if (it != cat_by_key.end() && it->second->object_class.has_value()) {
            known_classes[g.image_id].insert(*it->second->object_class);
        }
    }

    EvalResult result;
    double ap_sum = 0;
    int ap_count = 0;
    for (const auto& cat : cfg.categories) {
        CategoryResult cr;
        cr.category = cat;

        auto image_included = [&](const std::string& image_id) {
            if (cfg.mode == EvalMode::Default) return true;
            if (cat.object_class.has_value()) {
                auto it = known_classes.find(image_id);
                return it != known_classes.end() && it->second.count(*cat.object_class) > 0;
            }
            // Agent-only categories have no object class; fall back to images
            // whose GT contains the category itself.
            auto it = known_categories.find(image_id);
            return it != known_categories.end() && it->second.count({cat.action_id, cat.role_id}) > 0;
        };

        std::map<std::string, std::vector<GroundTruthTriplet>> gt_by_image;
        for (const auto& g : gts) {
            if (g.action_id == cat.action_id && g.role_id == cat.role_id && image_included(g.image_id)) {
                gt_by_image[g.image_id].push_back(g);
                ++cr.n_gt;
            }
        }
        std::map<std::string, std::vector<IndexedDet>> det_by_image;
        for (std::size_t i = 0; i < dets.size(); ++i) {
            const auto& d = dets[i];
            if (d.action_id == cat.action_id && d.role_id == cat.role_id && image_included(d.image_id)) {
                det_by_image[d.image_id].push_back({&d, i});
            }
        }

        struct ScoredFlag {
            double score;
            std::size_t input_index;
            bool tp;
        };
        std::vector<ScoredFlag> scored;
        for (auto& [image_id, image_dets] : det_by_image) {
            std::sort(image_dets.begin(), image_dets.end(), det_order);
            std::vector<HOITriplet> sorted;
            sorted.reserve(image_dets.size());
            for (const auto& id : image_dets) sorted.push_back(*id.det);
            const auto& image_gts = gt_by_image.count(image_id) ? gt_by_image[image_id]
                                                                : std::vector<GroundTruthTriplet>{};
            const std::vector<bool> flags = match_image(sorted, image_gts, cfg);
            for (std::size_t i = 0; i < flags.size(); ++i) {
                scored.push_back({image_dets[i].det->score, image_dets[i].input_index, flags[i]});
            }
        }
        std::sort(scored.begin(), scored.end(), [](const ScoredFlag& a, const ScoredFlag& b) {
            if (a.score != b.score) return a.score > b.score;
            return a.input_index < b.input_index;
        });
        std::vector<bool> flags;
        flags.reserve(scored.size());
        for (const auto& s : scored) {
            flags.push_back(s.tp);
            (s.tp ? cr.tp : cr.fp) += 1;
        }
        if (cr.n_gt > 0) {
            cr.ap = average_precision(flags, cr.n_gt);
            ap_sum += *cr.ap;
            ++ap_count;
            int tp = 0;
            for (std::size_t i = 0; i < flags.size(); ++i) {
                tp += flags[i] ? 1 : 0;
                cr.pr_points.emplace_back(static_cast<double>(tp) / cr.n_gt,
                                          static_cast<double>(tp) / static_cast<double>(i + 1));
            }
        }
        result.per_category.push_back(std::move(cr));
    }
    result.mAP = ap_count > 0 ? ap_sum / ap_count : 0;
    return result;
}

std::vector<SweepPoint> threshold_sweep(const std::vector<HOITriplet>& dets,
                                        const std::vector<GroundTruthTriplet>& gts, const EvalConfig& base,
                                        const std::vector<double>& thresholds) {
    if (thresholds.empty()) throw ValidationError("threshold_sweep: no thresholds given");
    std::vector<SweepPoint> out;
    out.reserve(thresholds.size());
    for (double t : thresholds) {
        EvalConfig cfg = base;
        cfg.iou_threshold = t;
        out.push_back({t, evaluate(dets, gts, cfg).mAP});
    }
    return out;
}

GroundTruthFile ground_truth_from_json_file(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("ground_truth_from_json_file: cannot open " + path.string());
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw ValidationError("ground truth: " + path.string() + " is not valid JSON: " + e.what());
    }
    GroundTruthFile gt;
    if (!j.contains("triplets") || !j["triplets"].is_array()) {
        throw ValidationError("ground truth: " + path.string() + " lacks a \"triplets\" array");
    }
    int n = 0;
    for (const auto& jt : j["triplets"]) {
        GroundTruthTriplet t;
        const std::string who = "GT triplet " + std::to_string(n++);
        t.image_id = jt.at("image_id").get<std::string>();
        const auto& hb = jt.at("human_box");
        t.human = {hb[0].get<double>(), hb[1].get<double>(), hb[2].get<double>(), hb[3].get<double>()};
        if (jt.contains("object_box") && !jt["object_box"].is_null()) {
            const auto& ob = jt["object_box"];
            t.object = BBox{ob[0].get<double>(), ob[1].get<double>(), ob[2].get<double>(), ob[3].get<double>()};
        }
        t.action_id = jt.at("action_id").get<int>();
        t.role_id = jt.at("role_id").get<int>();
        t.validate(who);
        gt.triplets.push_back(std::move(t));
    }
    if (j.contains("categories")) {
        for (const auto& jc : j["categories"]) {
            CategoryDef c;
            c.action_id = jc.at("action_id").get<int>();
            c.role_id = jc.at("role_id").get<int>();
            c.name = jc.value("name", std::string{});
            if (jc.contains("object_class") && !jc["object_class"].is_null()) {
                c.object_class = jc["object_class"].get<int>();
            }
            gt.categories.push_back(std::move(c));
        }
    }
    return gt;
}

std::string ground_truth_to_json(const GroundTruthFile& gt) {
    json out;
    out["triplets"] = json::array();
    for (const auto& t : gt.triplets) {
        json jt;
        jt["image_id"] = t.image_id;
        jt["human_box"] = json::array({t.human.x1, t.human.y1, t.human.x2, t.human.y2});
        jt["object_box"] = t.object.has_value()
                               ? json::array({t.object->x1, t.object->y1, t.object->x2, t.object->y2})
                               : json(nullptr);
        jt["action_id"] = t.action_id;
        jt["role_id"] = t.role_id;
        out["triplets"].push_back(std::move(jt));
    }
    out["categories"] = json::array();
    for (const auto& c : gt.categories) {
        json jc;
        jc["action_id"] = c.action_id;
        jc["role_id"] = c.role_id;
        jc["name"] = c.name;
        jc["object_class"] = c.object_class.has_value() ? json(*c.object_class) : json(nullptr);
        out["categories"].push_back(std::move(jc));
    }
    return out.dump(2);
}

std::string eval_result_to_json(const EvalResult& result) {
    json out;
    out["mAP"] = result.mAP;
    out["per_category"] = json::array();
    for (const auto& cr : result.per_category) {
        json jc;
        jc["action_id"] = cr.category.action_id;
        jc["role_id"] = cr.category.role_id;
        jc["name"] = cr.category.name;
        jc["ap"] = cr.ap.has_value() ? json(*cr.ap) : json(nullptr);
        jc["n_gt"] = cr.n_gt;
        jc["tp"] = cr.tp;
        jc["fp"] = cr.fp;
        out["per_category"].push_back(std::move(jc));
    }
    return out.dump(2);
}

std::string eval_result_table(const EvalResult& result) {
    std::ostringstream os;
    std::size_t name_w = 8;
    for (const auto& cr : result.per_category) name_w = std::max(name_w, cr.category.name.size());
    auto pad = [](const std::string& s, std::size_t w) {
        return s + std::string(w > s.size() ? w - s.size() : 0, ' ');
    };
    os << pad("category", name_w) << "  action  role  n_gt    tp    fp      AP\n";
    char buf[64];
    for (const auto& cr : result.per_category) {
        std::snprintf(buf, sizeof(buf), "  %6d  %4d  %4d  %4d  %4d  ", cr.category.action_id, cr.category.role_id,
                      cr.n_gt, cr.tp, cr.fp);
        os << pad(cr.category.name, name_w) << buf;
        if (cr.ap.has_value()) {
            std::snprintf(buf, sizeof(buf), "%.4f", *cr.ap);
            os << buf;
        } else {
            os << "     -";
        }
        os << "\n";
    }
    std::snprintf(buf, sizeof(buf), "%.4f", result.mAP);
    os << pad("mAP", name_w) << "  " << std::string(30, ' ') << buf << "\n";
    return os.str();
}

std::string sweep_to_json(const std::vector<SweepPoint>& points) {
    json out = json::array();
    for (const auto& p : points) {
        json jp;
        jp["threshold"] = p.threshold;
        jp["mAP"] = p.mAP;
        out.push_back(std::move(jp));
    }
    json wrapped;
    wrapped["sweep"] = std::move(out);
    return wrapped.dump(2);
}

std::string sweep_table(const std::vector<SweepPoint>& points) {
    std::ostringstream os;
    os << "threshold     mAP\n";
    char buf[64];
    for (const auto& p : points) {
        std::snprintf(buf, sizeof(buf), "%9.2f  %.4f\n", p.threshold, p.mAP);
        os << buf;
    }
    return os.str();
}

}  // namespace hoi
