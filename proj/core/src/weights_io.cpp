#include "hoi/weights_io.hpp"

#include <algorithm>
#include <fstream>

#include "hoi/serialize.hpp"
#include "json.hpp"

namespace hoi {

using nlohmann::json;

void save_weights_dir(const std::filesystem::path& dir,
                      const std::vector<std::pair<std::string, const TensorF*>>& named) {
    std::filesystem::create_directories(dir);
    json manifest;
    manifest["format"] = kWeightsFormatVersion;
    manifest["tensors"] = json::object();
    for (const auto& [name, tensor] : named) {
        const std::string file = name + ".hoit";
        save_tensor(dir / file, *tensor);
        json entry;
        entry["file"] = file;
        entry["shape"] = tensor->dims();
        manifest["tensors"][name] = std::move(entry);
    }
    std::ofstream f(dir / "weights.json");
    if (!f) throw IoError("save_weights_dir: cannot write " + (dir / "weights.json").string());
    f << manifest.dump(2) << "\n";
}

std::map<std::string, TensorF> load_weights_dir(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "weights.json";
    std::ifstream f(manifest_path);
    if (!f) throw IoError("load_weights_dir: cannot open " + manifest_path.string());
    json manifest;
    try {
        f >> manifest;
    } catch (const json::exception& e) {
        throw ValidationError("load_weights_dir: " + manifest_path.string() + " is not valid JSON: " + e.what());
    }
    if (manifest.value("format", 0) != kWeightsFormatVersion) {
        throw ValidationError("load_weights_dir: unsupported weights format in " + manifest_path.string());
    }
    std::map<std::string, TensorF> out;
    for (const auto& [name, entry] : manifest.at("tensors").items()) {
        const std::string file = entry.at("file").get<std::string>();
        TensorF t = load_tensor<float>(dir / file);
        if (entry.contains("shape")) {
            const std::vector<int> shape = entry["shape"].get<std::vector<int>>();
            if (shape != t.dims()) {
                throw ValidationError("load_weights_dir: tensor \"" + name + "\" in " + file + " has shape " +
                                      t.shape_str() + " but the manifest expects " + shape_to_string(shape));
            }
        }
        out.emplace(name, std::move(t));
    }
    return out;
}

std::vector<std::pair<std::string, TensorF*>> named_model_params(ModelWeights<float>& w) {
    std::vector<std::pair<std::string, TensorF*>> out;
    for_each_param<float>(w, [&out](const std::string& name, TensorF& t) { out.emplace_back(name, &t); });
    return out;
}

std::vector<std::pair<std::string, TensorF*>> named_backbone_params(ToyBackboneWeights<float>& w) {
    return {
        {"backbone.conv1.kernel", &w.conv1.kernel},
        {"backbone.conv1.bias", &w.conv1.bias},
        {"backbone.conv2.kernel", &w.conv2.kernel},
        {"backbone.conv2.bias", &w.conv2.bias},
    };
}

void save_model_dir(const std::filesystem::path& dir, const ModelConfig& cfg, ModelWeights<float>& model,
                    ToyBackboneWeights<float>* backbone) {
    std::vector<std::pair<std::string, const TensorF*>> named;
    for (const auto& [name, tensor] : named_model_params(model)) named.emplace_back(name, tensor);
    if (backbone != nullptr) {
        for (const auto& [name, tensor] : named_backbone_params(*backbone)) named.emplace_back(name, tensor);
    }
    save_weights_dir(dir, named);
    std::ofstream f(dir / "config.json");
    if (!f) throw IoError("save_model_dir: cannot write " + (dir / "config.json").string());
    f << config_to_json(cfg) << "\n";
}

ModelWeights<float> model_shapes_from_config(const ModelConfig& cfg, int feature_channels) {
    cfg.validate();
    auto conv = [](int kh, int kw, int cin, int cout) {
        return ConvWeights<float>{TensorF({kh, kw, cin, cout}), TensorF({cout})};
    };
    ModelWeights<float> w;
    w.project = conv(1, 1, feature_channels, cfg.embed_dim);
    const int k = cfg.kernel_size;
    const int c = cfg.context_channels;
    const int score = cfg.grid_size * cfg.grid_size * cfg.cell_channels;
    const int bottleneck = std::max(1, cfg.embed_dim / cfg.se_reduction);
    for (StreamWeights<float>* s : {&w.human, &w.object}) {
        s->context.a_col = conv(k, 1, feature_channels, c);
        s->context.a_row = conv(1, k, c, c);
        s->context.b_row = conv(1, k, feature_channels, c);
        s->context.b_col = conv(k, 1, c, c);
        s->local.score_conv = conv(1, 1, c, score);
        s->local.projection_fc = conv(1, 1, score, cfg.embed_dim);
        s->local.grid = cfg.grid_size;
        s->local.cell_channels = cfg.cell_channels;
        s->local.samples = cfg.roi_samples;
        s->attention.heatmap_conv = conv(1, 1, cfg.embed_dim, 1);
        s->attention.se_reduce = conv(1, 1, cfg.embed_dim, bottleneck);
        s->attention.se_expand = conv(1, 1, bottleneck, cfg.embed_dim);
        s->attention.head_fc1 = conv(1, 1, 2 * cfg.embed_dim, cfg.head_hidden);
        s->attention.head_fc2 = conv(1, 1, cfg.head_hidden, cfg.n_actions);
    }
    w.pairwise.conv1 = conv(5, 5, 2, 16);
    w.pairwise.conv2 = conv(5, 5, 16, 32);
    const int pooled = kPatternSize / 4;
    w.pairwise.fc = conv(1, 1, pooled * pooled * 32, cfg.n_actions);
    return w;
}

ModelWeights<float> load_model_dir(const std::filesystem::path& dir, const ModelConfig& cfg,
                                   int feature_channels) {
    const std::map<std::string, TensorF> tensors = load_weights_dir(dir);
    ModelWeights<float> model = model_shapes_from_config(cfg, feature_channels);
    for (auto& [name, param] : named_model_params(model)) {
        auto it = tensors.find(name);
        if (it == tensors.end()) {
            throw IoError("load_model_dir: weights directory " + dir.string() + " is missing tensor \"" + name +
                          "\" (" + name + ".hoit)");
        }
        if (!it->second.same_shape(*param)) {
            throw ValidationError("configuration error: tensor \"" + name + "\" has shape " +
                                  it->second.shape_str() + " but config requires " + param->shape_str());
        }
        *param = it->second;
    }
    model.validate_against(cfg, feature_channels);
    return model;
}

bool weights_dir_has_backbone(const std::filesystem::path& dir) {
    return std::filesystem::exists(dir / "backbone.conv1.kernel.hoit");
}

ToyBackboneWeights<float> load_backbone_dir(const std::filesystem::path& dir) {
    const std::map<std::string, TensorF> tensors = load_weights_dir(dir);
    ToyBackboneWeights<float> w;
    for (auto& [name, param] : named_backbone_params(w)) {
        auto it = tensors.find(name);
        if (it == tensors.end()) {
            throw IoError("load_backbone_dir: weights directory " + dir.string() + " is missing tensor \"" +
                          name + "\"");
        }
        *param = it->second;
    }
    return w;
}

void save_pgm(const std::filesystem::path& path, const TensorF& map) {
    if (map.rank() != 2) throw ValidationError("save_pgm: expected a rank-2 map, got " + map.shape_str());
    float lo = map[0], hi = map[0];
    for (std::int64_t i = 0; i < map.size(); ++i) {
        lo = std::min(lo, map[i]);
        hi = std::max(hi, map[i]);
    }
    const float range = hi > lo ? hi - lo : 1.0f;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("save_pgm: cannot open " + path.string());
    f << "P5\n" << map.dim(1) << " " << map.dim(0) << "\n255\n";
    for (std::int64_t i = 0; i < map.size(); ++i) {
        const float norm = (map[i] - lo) / range;
        const int v = std::clamp(static_cast<int>(norm * 255.0f + 0.5f), 0, 255);
        f.put(static_cast<char>(v));
    }
    if (!f) throw IoError("save_pgm: write failed for " + path.string());
}

}  // namespace hoi
