#pragma once

// Checkpoint directory: manifest.json (model config, attention/ablation
// modes, parameter names and shapes), params/<name>.eftx per tensor, and
// vocab.txt. Training drops its loss log alongside.

#include <filesystem>

#include "effectlab/condition.hpp"
#include "effectlab/dit.hpp"

namespace effectlab {

struct Checkpoint {
    DiTModel model;
    ConditionEncoder encoder;
    AblationMode ablation = AblationMode::both;
};

inline void save_checkpoint(const std::string& dir, DiTModel& model, ConditionEncoder& encoder,
                            AblationMode ablation) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir + "/params", ec);
    if (ec) throw IoError("cannot create checkpoint dir " + dir + ": " + ec.message());

    ParamMap params;
    model.register_params(params);
    encoder.register_params(params);

    json manifest;
    manifest["model"] = model.cfg.to_json();
    manifest["attention"] = to_string(model.attn_mode);
    manifest["ablation"] = to_string(ablation);
    json plist = json::array();
    for (auto& p : params) {
        plist.push_back(json{{"name", p.name}, {"shape", p.tensor.shape}});
        write_eftx(dir + "/params/" + p.name + ".eftx", p.tensor);
    }
    manifest["params"] = plist;
    save_json_file(dir + "/manifest.json", manifest);
    encoder.vocab.save(dir + "/vocab.txt");
}

inline Checkpoint load_checkpoint(const std::string& dir) {
    const json manifest = load_json_file(dir + "/manifest.json");
    if (!manifest.contains("model") || !manifest.contains("params"))
        throw IoError("checkpoint manifest missing fields in " + dir);
    const ModelConfig cfg = ModelConfig::from_json(manifest.at("model"));
    const AttentionMode mode = attention_from_string(manifest.value("attention", "dual"));

    Checkpoint ckpt{DiTModel::init(cfg, mode, 0),
                    ConditionEncoder::init(cfg, Vocab::load(dir + "/vocab.txt"), 0),
                    ablation_from_string(manifest.value("ablation", "both"))};

    ParamMap params;
    ckpt.model.register_params(params);
    ckpt.encoder.register_params(params);
    if (params.size() != manifest.at("params").size())
        throw IoError("checkpoint parameter count mismatch in " + dir);
    for (auto& p : params) {
        Tensor stored = read_eftx(dir + "/params/" + p.name + ".eftx");
        if (stored.shape != p.tensor.shape)
            throw ShapeError("checkpoint param " + p.name + " has shape " + shape_str(stored.shape) +
                             ", expected " + shape_str(p.tensor.shape));
        std::copy(stored.data->begin(), stored.data->end(), p.tensor.mut_ptr());
    }
    return ckpt;
}

}  // namespace effectlab
