// Command-line surface for the HOI detection pipeline: inference over
// precomputed feature manifests, triplet evaluation, IoU sweeps, toy
// training, gradient checking and attention-map export.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <thread>

#include "CLI11.hpp"
#include "hoi/evaluation.hpp"
#include "hoi/pipeline.hpp"
#include "hoi/serialize.hpp"
#include "hoi/training.hpp"
#include "hoi/weights_io.hpp"

namespace fs = std::filesystem;
using namespace hoi;

namespace {

constexpr const char* kVersionLine =
    "hoi 1.0.0 (tensor format HOIT v1, weights manifest v1, manifest/detections/results JSON v1)";

std::string sanitize_id(const std::string& id) {
    std::string out = id;
    for (char& c : out) {
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '.') c = '_';
    }
    return out;
}

void export_attention_maps(const fs::path& dir, const std::vector<AttentionMapExport>& maps) {
    fs::create_directories(dir);
    for (const auto& m : maps) {
        const std::string stem =
            sanitize_id(m.image_id) + "_" + (m.kind == DetKind::Human ? "human" : "object") +
            std::to_string(m.box_index);
        save_tensor(dir / (stem + "_attn.hoit"), m.attn_map);
        save_pgm(dir / (stem + "_attn.pgm"), m.attn_map);
        save_tensor(dir / (stem + "_heat.hoit"), m.heatmap_norm);
        save_pgm(dir / (stem + "_heat.pgm"), m.heatmap_norm);
    }
}

struct InferOptions {
    std::string manifest, weights, config, out, attn_dir;
    int jobs = 1;
    double human_thresh = -1, object_thresh = -1;  // negative: use config values
};

struct PerImageOutput {
    std::vector<HOITriplet> triplets;
    std::vector<AttentionMapExport> attn;
};

int run_infer(const InferOptions& opt) {
    ModelConfig cfg = load_config(opt.config);
    if (opt.human_thresh >= 0) cfg.human_thresh = opt.human_thresh;
    if (opt.object_thresh >= 0) cfg.object_thresh = opt.object_thresh;
    cfg.validate();
    const ModelWeights<float> model = load_model_dir(opt.weights, cfg, cfg.feature_channels);
    const Manifest manifest = load_manifest(opt.manifest);

    // Canonical output order: images sorted by id, triplets in generation
    // order within an image, regardless of --jobs.
    std::vector<std::size_t> order(manifest.images.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return manifest.images[a].id < manifest.images[b].id;
    });

    std::vector<PerImageOutput> outputs(manifest.images.size());
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;

    auto worker = [&]() {
        while (!failed.load()) {
            const std::size_t slot = next.fetch_add(1);
            if (slot >= order.size()) break;
            const std::size_t idx = order[slot];
            try {
                const ManifestImage& entry = manifest.images[idx];
                const ImageFeatures feats = load_features(entry, manifest.base_dir);
                const auto kept = filter_detections(entry.detections, cfg.human_thresh, cfg.object_thresh);
                PerImageOutput& out = outputs[idx];
                out.triplets =
                    detect(feats, kept, model, cfg, opt.attn_dir.empty() ? nullptr : &out.attn);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                failed.store(true);
            }
        }
    };

    const int jobs = std::max(1, opt.jobs);
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (error) std::rethrow_exception(error);

    std::vector<HOITriplet> all;
    for (std::size_t slot : order) {
        auto& out = outputs[slot];
        all.insert(all.end(), out.triplets.begin(), out.triplets.end());
    }
    if (!opt.attn_dir.empty()) {
        std::vector<AttentionMapExport> maps;
        for (std::size_t slot : order) {
            auto& out = outputs[slot];
            maps.insert(maps.end(), out.attn.begin(), out.attn.end());
        }
        export_attention_maps(opt.attn_dir, maps);
    }

    std::ofstream f(opt.out);
    if (!f) throw IoError("infer: cannot write " + opt.out);
    f << detections_to_json(all) << "\n";
    std::cerr << "wrote " << all.size() << " triplets over " << manifest.images.size() << " images to "
              << opt.out << "\n";
    return 0;
}

EvalConfig eval_config_from(const GroundTruthFile& gt, double iou_thr, const std::string& mode) {
    EvalConfig cfg;
    cfg.iou_threshold = iou_thr;
    if (mode == "default") {
        cfg.mode = EvalMode::Default;
    } else if (mode == "known-object") {
        cfg.mode = EvalMode::KnownObject;
    } else {
        throw ValidationError("eval: mode must be \"default\" or \"known-object\", got \"" + mode + "\"");
    }
    cfg.categories = gt.categories;
    if (cfg.categories.empty()) {
        // Derive the category table from the GT triplets.
        for (const auto& t : gt.triplets) {
            bool seen = false;
            for (const auto& c : cfg.categories) {
                if (c.action_id == t.action_id && c.role_id == t.role_id) seen = true;
            }
            if (!seen) cfg.categories.push_back({t.action_id, t.role_id, "", std::nullopt});
        }
    }
    cfg.validate();
    return cfg;
}

std::vector<double> parse_thresholds(const std::string& csv) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos < csv.size()) {
        const std::size_t comma = csv.find(',', pos);
        const std::string tok = csv.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        try {
            out.push_back(std::stod(tok));
        } catch (const std::exception&) {
            throw ValidationError("sweep: bad threshold \"" + tok + "\"");
        }
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (out.empty()) throw ValidationError("sweep: no thresholds given");
    for (double t : out) {
        if (!(t > 0) || t > 1) throw ValidationError("sweep: thresholds must be in (0, 1]");
    }
    return out;
}

int run_main(int argc, char** argv) {
    CLI::App app{"Contextual-attention human-object interaction detection toolkit"};
    app.set_version_flag("--version", kVersionLine);
    app.require_subcommand(1);

    // infer
    InferOptions infer_opt;
    CLI::App* infer = app.add_subcommand("infer", "Run HOI detection over a feature manifest");
    infer->add_option("--manifest", infer_opt.manifest, "Manifest JSON")->required();
    infer->add_option("--weights", infer_opt.weights, "Weights directory")->required();
    infer->add_option("--config", infer_opt.config, "Model config JSON")->required();
    infer->add_option("--out", infer_opt.out, "Output detections JSON")->required();
    infer->add_option("--attn-dir", infer_opt.attn_dir, "Export attention maps (HOIT + PGM) here");
    infer->add_option("--jobs", infer_opt.jobs, "Parallel image workers")->check(CLI::Range(1, 256));
    infer->add_option("--human-thresh", infer_opt.human_thresh, "Override the config human threshold");
    infer->add_option("--object-thresh", infer_opt.object_thresh, "Override the config object threshold");

    // eval
    std::string dets_path, gt_path, mode = "default";
    double iou_thr = 0.5;
    CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate detections against ground truth (role AP)");
    eval_cmd->add_option("--dets", dets_path, "Detections JSON")->required();
    eval_cmd->add_option("--gt", gt_path, "Ground-truth JSON")->required();
    eval_cmd->add_option("--iou", iou_thr, "IoU threshold (default 0.5)");
    eval_cmd->add_option("--mode", mode, "default | known-object");

    // sweep
    std::string sweep_dets, sweep_gt, thresholds_csv = "0.1,0.3,0.5,0.7,0.9", sweep_mode = "default";
    CLI::App* sweep_cmd = app.add_subcommand("sweep", "Evaluate across a list of IoU thresholds");
    sweep_cmd->add_option("--dets", sweep_dets, "Detections JSON")->required();
    sweep_cmd->add_option("--gt", sweep_gt, "Ground-truth JSON")->required();
    sweep_cmd->add_option("--thresholds", thresholds_csv, "Comma-separated IoU thresholds");
    sweep_cmd->add_option("--mode", sweep_mode, "default | known-object");

    // train-toy
    std::uint64_t seed = 0;
    int steps = 500;
    std::string train_out;
    SgdConfig sgd;
    CLI::App* train_cmd = app.add_subcommand("train-toy", "Train on the synthetic interaction task");
    train_cmd->add_option("--steps", steps, "SGD steps")->required();
    train_cmd->add_option("--seed", seed, "RNG seed");
    train_cmd->add_option("--out", train_out, "Output weights directory")->required();
    train_cmd->add_option("--lr", sgd.learning_rate, "Learning rate");
    train_cmd->add_option("--momentum", sgd.momentum, "Momentum");
    train_cmd->add_option("--weight-decay", sgd.weight_decay, "Weight decay");

    // gradcheck
    std::uint64_t gc_seed = 0;
    double gc_tol = 1e-4;
    CLI::App* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference checks for every block");
    gc_cmd->add_option("--seed", gc_seed, "RNG seed");
    gc_cmd->add_option("--tol", gc_tol, "Relative tolerance");

    // export-attn
    InferOptions attn_opt;
    CLI::App* attn_cmd = app.add_subcommand("export-attn", "Write attention maps for every manifest box");
    attn_cmd->add_option("--manifest", attn_opt.manifest, "Manifest JSON")->required();
    attn_cmd->add_option("--weights", attn_opt.weights, "Weights directory")->required();
    attn_cmd->add_option("--config", attn_opt.config, "Model config JSON")->required();
    attn_cmd->add_option("--out-dir", attn_opt.attn_dir, "Output directory")->required();

    CLI11_PARSE(app, argc, argv);

    if (infer->parsed()) return run_infer(infer_opt);

    if (eval_cmd->parsed()) {
        const auto dets = detections_from_json_file(dets_path);
        const auto gt = ground_truth_from_json_file(gt_path);
        const EvalConfig cfg = eval_config_from(gt, iou_thr, mode);
        const EvalResult result = evaluate(dets, gt.triplets, cfg);
        std::cout << eval_result_to_json(result) << "\n";
        std::cerr << eval_result_table(result);
        return 0;
    }

    if (sweep_cmd->parsed()) {
        const auto dets = detections_from_json_file(sweep_dets);
        const auto gt = ground_truth_from_json_file(sweep_gt);
        const EvalConfig cfg = eval_config_from(gt, 0.5, sweep_mode);
        const auto points = threshold_sweep(dets, gt.triplets, cfg, parse_thresholds(thresholds_csv));
        std::cout << sweep_to_json(points) << "\n";
        std::cerr << sweep_table(points);
        return 0;
    }

    if (train_cmd->parsed()) {
        TrainToyResult r = train_toy(seed, steps, sgd);
        save_model_dir(train_out, r.config, r.model, &r.backbone);
        std::ofstream csv(fs::path(train_out) / "loss.csv");
        if (!csv) throw IoError("train-toy: cannot write loss.csv");
        csv << "step,loss\n";
        for (std::size_t i = 0; i < r.losses.size(); ++i) csv << i << "," << r.losses[i] << "\n";
        std::cout << "{\n  \"steps\": " << steps << ",\n  \"seed\": " << seed << ",\n  \"final_loss\": "
                  << (r.losses.empty() ? 0.0 : r.losses.back()) << ",\n  \"out\": \"" << train_out << "\"\n}\n";
        return 0;
    }

    if (gc_cmd->parsed()) {
        const GradCheckReport report = gradcheck_all(gc_seed, gc_tol);
        std::cout << gradcheck_report_to_json(report) << "\n";
        return report.all_pass ? 0 : 1;
    }

    if (attn_cmd->parsed()) {
        ModelConfig cfg = load_config(attn_opt.config);
        const ModelWeights<float> model = load_model_dir(attn_opt.weights, cfg, cfg.feature_channels);
        const Manifest manifest = load_manifest(attn_opt.manifest);
        std::vector<AttentionMapExport> maps;
        for (const auto& entry : manifest.images) {
            const ImageFeatures feats = load_features(entry, manifest.base_dir);
            const auto kept = filter_detections(entry.detections, cfg.human_thresh, cfg.object_thresh);
            detect(feats, kept, model, cfg, &maps);
        }
        export_attention_maps(attn_opt.attn_dir, maps);
        std::cerr << "wrote " << maps.size() << " attention map pairs to " << attn_opt.attn_dir << "\n";
        return 0;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run_main(argc, argv);
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
