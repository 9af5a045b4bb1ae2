#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "hoi/evaluation.hpp"
#include "hoi/serialize.hpp"
#include "hoi/training.hpp"
#include "json.hpp"
#include "support/test_util.hpp"

using namespace hoi;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string out, err;
};

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

RunResult run_cli(const std::string& args, const fs::path& dir) {
    const fs::path out = dir / "stdout.txt", err = dir / "stderr.txt";
    const std::string cmd = std::string(HOI_CLI_PATH) + " " + args + " > " + out.string() + " 2> " +
                            err.string();
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

struct CliFixture {
    fs::path dir;
    fs::path weights, config, manifest;

    CliFixture() {
        dir = fs::temp_directory_path() / ("hoi_cli_" + std::to_string(std::random_device{}()));
        fs::create_directories(dir);
        weights = dir / "weights";
        const auto boot = run_cli("train-toy --steps 0 --seed 3 --out " + weights.string(), dir);
        REQUIRE(boot.exit_code == 0);
        config = weights / "config.json";

        // Three images of toy-backbone-shaped features with one human and
        // two objects each.
        std::mt19937 rng(17);
        json m;
        m["images"] = json::array();
        for (int i = 0; i < 3; ++i) {
            const std::string id = "img" + std::to_string(i);
            const std::string file = id + ".hoit";
            save_tensor(dir / file, hoi::test::rand_tensor<float>(rng, {16, 16, 8}, 0.0, 1.0));
            json img;
            img["id"] = id;
            img["features"] = file;
            img["stride"] = 4;
            img["width"] = 64;
            img["height"] = 64;
            img["detections"] = json::array();
            auto det = [&](double x1, double y1, double x2, double y2, int cls, const char* kind) {
                json d;
                d["box"] = {x1, y1, x2, y2};
                d["class_id"] = cls;
                d["score"] = 1.0;
                d["kind"] = kind;
                img["detections"].push_back(d);
            };
            det(4 + i, 6, 26 + i, 30, 1, "human");
            det(30, 8 + i, 46, 26 + i, 2, "object");
            det(10, 36, 28, 52, 2, "object");
            m["images"].push_back(img);
        }
        manifest = dir / "manifest.json";
        std::ofstream f(manifest);
        f << m.dump(2);
    }
    ~CliFixture() { fs::remove_all(dir); }
};

}  // namespace

TEST_CASE("infer") {
    CliFixture fx;
    const std::string base = "infer --manifest " + fx.manifest.string() + " --weights " + fx.weights.string() +
                             " --config " + fx.config.string();

    SUBCASE("fixture manifest produces the combinatorial triplet count, byte-stable across runs") {
        const fs::path out1 = fx.dir / "dets1.json", out2 = fx.dir / "dets2.json";
        const auto r1 = run_cli(base + " --out " + out1.string(), fx.dir);
        REQUIRE(r1.exit_code == 0);
        const auto r2 = run_cli(base + " --out " + out2.string(), fx.dir);
        REQUIRE(r2.exit_code == 0);
        CHECK(slurp(out1) == slurp(out2));

        const json dets = json::parse(slurp(out1));
        // Per image: 1 human x 2 objects x 3 paired slots + 1 agent slot = 7.
        CHECK(dets["triplets"].size() == 3 * 7);
        for (const auto& t : dets["triplets"]) {
            CHECK(t["score"].get<double>() >= 0.0);
            CHECK(t["score"].get<double>() <= 1.0);
        }
    }
    SUBCASE("--jobs 1 and --jobs 4 produce byte-identical output") {
        const fs::path out1 = fx.dir / "j1.json", out4 = fx.dir / "j4.json";
        REQUIRE(run_cli(base + " --jobs 1 --out " + out1.string(), fx.dir).exit_code == 0);
        REQUIRE(run_cli(base + " --jobs 4 --out " + out4.string(), fx.dir).exit_code == 0);
        CHECK(slurp(out1) == slurp(out4));
    }
    SUBCASE("empty manifest yields empty triplets and exit 0") {
        const fs::path empty = fx.dir / "empty.json";
        std::ofstream(empty) << R"({"images": []})";
        const fs::path out = fx.dir / "empty_out.json";
        const auto r = run_cli("infer --manifest " + empty.string() + " --weights " + fx.weights.string() +
                                   " --config " + fx.config.string() + " --out " + out.string(),
                               fx.dir);
        CHECK(r.exit_code == 0);
        CHECK(json::parse(slurp(out))["triplets"].empty());
    }
    SUBCASE("missing weights file exits 1 and names the file") {
        fs::remove(fx.weights / "object.attention.se_reduce.kernel.hoit");
        const auto r = run_cli(base + " --out " + (fx.dir / "x.json").string(), fx.dir);
        CHECK(r.exit_code == 1);
        CHECK(r.err.find("object.attention.se_reduce.kernel") != std::string::npos);
    }
    SUBCASE("NaN weights surface as a numeric failure with exit 2") {
        const fs::path poisoned = fx.weights / "human.attention.head_fc2.bias.hoit";
        TensorF bias = load_tensor<float>(poisoned);
        bias(0) = std::numeric_limits<float>::quiet_NaN();
        save_tensor(poisoned, bias);
        const auto r = run_cli(base + " --out " + (fx.dir / "nan.json").string(), fx.dir);
        CHECK(r.exit_code == 2);
        CHECK(r.err.find("numeric error") != std::string::npos);
    }
    SUBCASE("detections below the thresholds are filtered out") {
        // A manifest whose only human sits at exactly the 0.8 threshold:
        // strict comparison removes it, so no triplets come back.
        json m = json::parse(slurp(fx.manifest));
        for (auto& img : m["images"]) {
            for (auto& d : img["detections"]) {
                if (d["kind"] == "human") d["score"] = 0.8;
            }
        }
        const fs::path edited = fx.dir / "edited.json";
        std::ofstream(edited) << m.dump();
        const fs::path out = fx.dir / "filtered.json";
        const auto r = run_cli("infer --manifest " + edited.string() + " --weights " + fx.weights.string() +
                                   " --config " + fx.config.string() + " --out " + out.string(),
                               fx.dir);
        REQUIRE(r.exit_code == 0);
        CHECK(json::parse(slurp(out))["triplets"].empty());
    }
}

TEST_CASE("eval and sweep") {
    CliFixture fx;
    // A small hand fixture: two images, two categories; detections equal GT.
    GroundTruthFile gt;
    gt.categories = {{0, 0, "lift", 5}, {1, 2, "wave", std::nullopt}};
    std::vector<HOITriplet> dets;
    for (int i = 0; i < 2; ++i) {
        const std::string id = "img" + std::to_string(i);
        GroundTruthTriplet g1;
        g1.image_id = id;
        g1.human = {10.0 + i, 10, 40, 60};
        g1.object = BBox{30, 20, 55, 45};
        g1.action_id = 0;
        g1.role_id = 0;
        gt.triplets.push_back(g1);
        GroundTruthTriplet g2;
        g2.image_id = id;
        g2.human = {12, 8, 42, 58};
        g2.action_id = 1;
        g2.role_id = kRoleAgentOnly;
        gt.triplets.push_back(g2);
        HOITriplet d1;
        d1.image_id = id;
        d1.human = g1.human;
        d1.object = g1.object;
        d1.action_id = 0;
        d1.role_id = 0;
        d1.score = 0.9;
        dets.push_back(d1);
        HOITriplet d2;
        d2.image_id = id;
        d2.human = g2.human;
        d2.action_id = 1;
        d2.role_id = kRoleAgentOnly;
        d2.score = 0.8;
        dets.push_back(d2);
    }
    const fs::path gt_path = fx.dir / "gt.json", det_path = fx.dir / "dets.json";
    std::ofstream(gt_path) << ground_truth_to_json(gt);
    std::ofstream(det_path) << detections_to_json(dets);

    SUBCASE("perfect fixture gives mAP 1.0 at the default 0.5 threshold") {
        const auto r = run_cli("eval --dets " + det_path.string() + " --gt " + gt_path.string(), fx.dir);
        REQUIRE(r.exit_code == 0);
        const json j = json::parse(r.out);
        CHECK(j["mAP"].get<double>() == doctest::Approx(1.0));
        CHECK(j["per_category"].size() == 2);
        // The aligned table goes to stderr.
        CHECK(r.err.find("mAP") != std::string::npos);
    }
    SUBCASE("eval matches the library evaluator on a jittered fixture") {
        std::vector<HOITriplet> noisy = dets;
        for (std::size_t i = 0; i < noisy.size(); ++i) {
            noisy[i].human.x1 += static_cast<double>(i);
            noisy[i].score = 0.5 + 0.1 * static_cast<double>(i);
        }
        const fs::path noisy_path = fx.dir / "noisy.json";
        std::ofstream(noisy_path) << detections_to_json(noisy);
        const auto r = run_cli("eval --dets " + noisy_path.string() + " --gt " + gt_path.string() + " --iou 0.6",
                               fx.dir);
        REQUIRE(r.exit_code == 0);
        EvalConfig cfg;
        cfg.iou_threshold = 0.6;
        cfg.categories = gt.categories;
        const double expect = evaluate(noisy, gt.triplets, cfg).mAP;
        CHECK(json::parse(r.out)["mAP"].get<double>() == doctest::Approx(expect).epsilon(1e-12));
    }
    SUBCASE("known-object mode flag is honored") {
        const auto r = run_cli(
            "eval --dets " + det_path.string() + " --gt " + gt_path.string() + " --mode known-object", fx.dir);
        REQUIRE(r.exit_code == 0);
        CHECK(json::parse(r.out)["mAP"].get<double>() == doctest::Approx(1.0));
    }
    SUBCASE("sweep runs the published threshold list and stays at 1.0 for a perfect fixture") {
        const auto r = run_cli("sweep --dets " + det_path.string() + " --gt " + gt_path.string(), fx.dir);
        REQUIRE(r.exit_code == 0);
        const json j = json::parse(r.out);
        REQUIRE(j["sweep"].size() == 5);
        const double expected_thresholds[] = {0.1, 0.3, 0.5, 0.7, 0.9};
        for (int i = 0; i < 5; ++i) {
            CHECK(j["sweep"][i]["threshold"].get<double>() == expected_thresholds[i]);
            CHECK(j["sweep"][i]["mAP"].get<double>() == doctest::Approx(1.0));
        }
    }
    SUBCASE("bad mode string exits 1") {
        const auto r =
            run_cli("eval --dets " + det_path.string() + " --gt " + gt_path.string() + " --mode sideways", fx.dir);
        CHECK(r.exit_code == 1);
    }
}

TEST_CASE("train-toy writes weights, config and a loss curve deterministically") {
    CliFixture fx;
    const fs::path out_a = fx.dir / "run_a", out_b = fx.dir / "run_b";
    const auto ra = run_cli("train-toy --steps 12 --seed 9 --out " + out_a.string(), fx.dir);
    REQUIRE(ra.exit_code == 0);
    const auto rb = run_cli("train-toy --steps 12 --seed 9 --out " + out_b.string(), fx.dir);
    REQUIRE(rb.exit_code == 0);
    CHECK(slurp(out_a / "loss.csv") == slurp(out_b / "loss.csv"));
    CHECK(slurp(out_a / "weights.json") == slurp(out_b / "weights.json"));
    CHECK(slurp(out_a / "human.attention.head_fc1.kernel.hoit") ==
          slurp(out_b / "human.attention.head_fc1.kernel.hoit"));
    const std::string csv = slurp(out_a / "loss.csv");
    CHECK(csv.substr(0, 10) == "step,loss\n");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 13);  // header + 12 steps
}

TEST_CASE("gradcheck subcommand exits 0 at the default tolerance") {
    CliFixture fx;
    const auto r = run_cli("gradcheck --seed 1", fx.dir);
    CHECK(r.exit_code == 0);
    const json j = json::parse(r.out);
    CHECK(j["all_pass"].get<bool>());
    CHECK(j["blocks"].size() == 7);
}

TEST_CASE("export-attn writes HOIT and PGM maps per scored box") {
    CliFixture fx;
    const fs::path attn_dir = fx.dir / "attn";
    const auto r = run_cli("export-attn --manifest " + fx.manifest.string() + " --weights " +
                               fx.weights.string() + " --config " + fx.config.string() + " --out-dir " +
                               attn_dir.string(),
                           fx.dir);
    REQUIRE(r.exit_code == 0);
    // 3 images x (1 human + 2 objects) x 2 maps x 2 formats.
    int hoit = 0, pgm = 0;
    for (const auto& entry : fs::directory_iterator(attn_dir)) {
        if (entry.path().extension() == ".hoit") ++hoit;
        if (entry.path().extension() == ".pgm") ++pgm;
    }
    CHECK(hoit == 18);
    CHECK(pgm == 18);
    // PGM header sanity.
    const std::string pgm_bytes = slurp(attn_dir / "img0_human0_attn.pgm");
    CHECK(pgm_bytes.substr(0, 3) == "P5\n");
    const TensorF attn = load_tensor<float>(attn_dir / "img0_human0_attn.hoit");
    CHECK(attn.rank() == 2);
    double sum = 0;
    for (std::int64_t i = 0; i < attn.size(); ++i) sum += attn[i];
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("--version prints the format versions") {
    CliFixture fx;
    const auto r = run_cli("--version", fx.dir);
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("HOIT v1") != std::string::npos);
}
