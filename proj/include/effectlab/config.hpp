#pragma once

#include <fstream>
#include <nlohmann/json.hpp>
#include <string>

#include "effectlab/common.hpp"

namespace effectlab {

using json = nlohmann::json;

enum class AblationMode { semantic, visual, both };
enum class AttentionMode { dual, single };

inline std::string to_string(AblationMode m) {
    switch (m) {
        case AblationMode::semantic: return "semantic";
        case AblationMode::visual: return "visual";
        default: return "both";
    }
}

inline std::string to_string(AttentionMode m) { return m == AttentionMode::dual ? "dual" : "single"; }

inline AblationMode ablation_from_string(const std::string& s) {
    if (s == "semantic") return AblationMode::semantic;
    if (s == "visual") return AblationMode::visual;
    if (s == "both") return AblationMode::both;
    throw ConfigError("ablation mode must be semantic|visual|both, got '" + s + "'");
}

inline AttentionMode attention_from_string(const std::string& s) {
    if (s == "dual") return AttentionMode::dual;
    if (s == "single") return AttentionMode::single;
    throw ConfigError("attention mode must be dual|single, got '" + s + "'");
}

struct ModelConfig {
    int width = 128;
    int depth = 4;
    int heads = 4;
    int head_dim = 32;
    int patch_t = 1;
    int patch_h = 2;
    int patch_w = 2;
    int latent_channels = 4;
    float rope_theta = 10000.0f;
    int rope_bias = -1;  // -1: auto = 2 * target token frames
    int rope_dim_t = -1, rope_dim_h = -1, rope_dim_w = -1;  // -1: head_dim/2, /4, /4
    bool rope_enabled = true;
    int cond_width = -1;  // -1: same as width
    int ffn_mult = 4;
    int n_und_tokens = 16;
    int max_text_tokens = 64;
    float time_scale = 1000.0f;
    float norm_eps = 1e-6f;

    int resolved_cond_width() const { return cond_width > 0 ? cond_width : width; }
    int rope_t() const { return rope_dim_t > 0 ? rope_dim_t : head_dim / 2; }
    int rope_h() const { return rope_dim_h > 0 ? rope_dim_h : head_dim / 4; }
    int rope_w() const { return rope_dim_w > 0 ? rope_dim_w : head_dim / 4; }

    void validate() const {
        if (width != heads * head_dim) throw ConfigError("model width must equal heads * head_dim");
        if (width % 2 != 0) throw ConfigError("model width must be even");
        if (head_dim % 2 != 0) throw ConfigError("head_dim must be even");
        if (patch_t != 1)
            throw ConfigError("patch_t must be 1: first-frame anchoring operates on whole temporal tokens");
        if (patch_h < 1 || patch_w < 1) throw ConfigError("patch sizes must be positive");
        if (depth < 1) throw ConfigError("depth must be >= 1");
        if (rope_t() + rope_h() + rope_w() != head_dim)
            throw ConfigError("rope partition must sum to head_dim");
        if (rope_t() % 2 || rope_h() % 2 || rope_w() % 2) throw ConfigError("rope sub-bands must be even");
        if (n_und_tokens < 1) throw ConfigError("n_und_tokens must be >= 1");
    }

    json to_json() const {
        return json{{"width", width},
                    {"depth", depth},
                    {"heads", heads},
                    {"head_dim", head_dim},
                    {"patch_t", patch_t},
                    {"patch_h", patch_h},
                    {"patch_w", patch_w},
                    {"latent_channels", latent_channels},
                    {"rope_theta", rope_theta},
                    {"rope_bias", rope_bias},
                    {"rope_dim_t", rope_dim_t},
                    {"rope_dim_h", rope_dim_h},
                    {"rope_dim_w", rope_dim_w},
                    {"rope_enabled", rope_enabled},
                    {"cond_width", cond_width},
                    {"ffn_mult", ffn_mult},
                    {"n_und_tokens", n_und_tokens},
                    {"max_text_tokens", max_text_tokens},
                    {"time_scale", time_scale},
                    {"norm_eps", norm_eps}};
    }

    static ModelConfig from_json(const json& j) {
        ModelConfig c;
        c.width = j.value("width", c.width);
        c.depth = j.value("depth", c.depth);
        c.heads = j.value("heads", c.heads);
        c.head_dim = j.value("head_dim", c.head_dim);
        c.patch_t = j.value("patch_t", c.patch_t);
        c.patch_h = j.value("patch_h", c.patch_h);
        c.patch_w = j.value("patch_w", c.patch_w);
        c.latent_channels = j.value("latent_channels", c.latent_channels);
        c.rope_theta = j.value("rope_theta", c.rope_theta);
        c.rope_bias = j.value("rope_bias", c.rope_bias);
        c.rope_dim_t = j.value("rope_dim_t", c.rope_dim_t);
        c.rope_dim_h = j.value("rope_dim_h", c.rope_dim_h);
        c.rope_dim_w = j.value("rope_dim_w", c.rope_dim_w);
        c.rope_enabled = j.value("rope_enabled", c.rope_enabled);
        c.cond_width = j.value("cond_width", c.cond_width);
        c.ffn_mult = j.value("ffn_mult", c.ffn_mult);
        c.n_und_tokens = j.value("n_und_tokens", c.n_und_tokens);
        c.max_text_tokens = j.value("max_text_tokens", c.max_text_tokens);
        c.time_scale = j.value("time_scale", c.time_scale);
        c.norm_eps = j.value("norm_eps", c.norm_eps);
        c.validate();
        return c;
    }
};

struct SampleConfig {
    int steps = 30;
    float guidance = 6.0f;
    float shift = 16.0f;
    uint64_t seed = 0;
    bool drop_reference_for_uncond = false;

    json to_json() const {
        return json{{"steps", steps},
                    {"guidance", guidance},
                    {"shift", shift},
                    {"seed", seed},
                    {"drop_reference_for_uncond", drop_reference_for_uncond}};
    }

    static SampleConfig from_json(const json& j) {
        SampleConfig c;
        c.steps = j.value("steps", c.steps);
        c.guidance = j.value("guidance", c.guidance);
        c.shift = j.value("shift", c.shift);
        c.seed = j.value("seed", c.seed);
        c.drop_reference_for_uncond = j.value("drop_reference_for_uncond", c.drop_reference_for_uncond);
        if (c.steps < 1) throw ConfigError("sample steps must be >= 1");
        if (c.guidance < 1.0f) throw ConfigError("guidance must be >= 1");
        if (c.shift < 1.0f) throw ConfigError("shift must be >= 1");
        return c;
    }
};

struct TrainConfig {
    std::string dataset;
    std::string out_dir = "train_out";
    ModelConfig model;
    float lr = 2e-5f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float adam_eps = 1e-8f;
    int steps = 2000;
    int batch_size = 1;
    float p_drop = 0.1f;
    uint64_t seed = 0;
    int checkpoint_every = 0;  // 0: final checkpoint only
    int timesteps = 1000;      // T of the timestep sampler
    AblationMode ablation = AblationMode::both;
    AttentionMode attention = AttentionMode::dual;

    json to_json() const {
        return json{{"dataset", dataset},
                    {"out_dir", out_dir},
                    {"model", model.to_json()},
                    {"lr", lr},
                    {"beta1", beta1},
                    {"beta2", beta2},
                    {"adam_eps", adam_eps},
                    {"steps", steps},
                    {"batch_size", batch_size},
                    {"p_drop", p_drop},
                    {"seed", seed},
                    {"checkpoint_every", checkpoint_every},
                    {"timesteps", timesteps},
                    {"ablation", to_string(ablation)},
                    {"attention", to_string(attention)}};
    }

    static TrainConfig from_json(const json& j) {
        TrainConfig c;
        if (!j.contains("dataset")) throw ConfigError("train config missing 'dataset'");
        c.dataset = j.at("dataset").get<std::string>();
        c.out_dir = j.value("out_dir", c.out_dir);
        if (j.contains("model")) c.model = ModelConfig::from_json(j.at("model"));
        c.lr = j.value("lr", c.lr);
        c.beta1 = j.value("beta1", c.beta1);
        c.beta2 = j.value("beta2", c.beta2);
        c.adam_eps = j.value("adam_eps", c.adam_eps);
        c.steps = j.value("steps", c.steps);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.p_drop = j.value("p_drop", c.p_drop);
        c.seed = j.value("seed", c.seed);
        c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
        c.timesteps = j.value("timesteps", c.timesteps);
        c.ablation = ablation_from_string(j.value("ablation", "both"));
        c.attention = attention_from_string(j.value("attention", "dual"));
        if (c.steps < 1) throw ConfigError("train steps must be >= 1");
        if (c.batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (c.p_drop < 0.0f || c.p_drop > 1.0f) throw ConfigError("p_drop must lie in [0,1]");
        if (c.timesteps < 1) throw ConfigError("timesteps must be >= 1");
        c.model.validate();
        return c;
    }
};

inline json load_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config file: " + path);
    json j;
    try {
        is >> j;
    } catch (const json::parse_error& e) {
        throw ConfigError("failed to parse " + path + ": " + e.what());
    }
    return j;
}

inline void save_json_file(const std::string& path, const json& j) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for write: " + path);
    os << j.dump(2) << "\n";
    if (!os) throw IoError("write failed: " + path);
}

}  // namespace effectlab
