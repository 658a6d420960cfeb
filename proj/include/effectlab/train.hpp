#pragma once

// Training harness: loads a synthesized dataset into memory, assembles the
// model and condition encoders, and runs flow-matching steps with Adam.
// The ablation mode transforms inputs only (zeroed reference latent for
// semantic-only, dropped condition streams for visual-only); the model is
// never re-assembled.

#include <chrono>
#include <filesystem>

#include "effectlab/checkpoint.hpp"
#include "effectlab/flow.hpp"

namespace effectlab {

struct LoadedSample {
    ManifestRecord rec;
    Tensor ref, first, tgt;
};

inline std::vector<LoadedSample> load_dataset_samples(const std::string& dir,
                                                      const std::vector<ManifestRecord>& records) {
    std::vector<LoadedSample> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        LoadedSample s;
        s.rec = r;
        s.ref = read_eftx(dir + "/" + r.ref_file);
        s.first = read_eftx(dir + "/" + r.first_file);
        s.tgt = read_eftx(dir + "/" + r.tgt_file);
        out.push_back(std::move(s));
    }
    return out;
}

struct TrainResult {
    std::vector<float> losses;
    std::string checkpoint_dir;
    double seconds = 0.0;
};

namespace detail {
inline void copy_file_over(const std::string& from, const std::string& to) {
    std::error_code ec;
    std::filesystem::copy_file(from, to, std::filesystem::copy_options::overwrite_existing, ec);
}
}  // namespace detail

inline TrainResult train_loop(const TrainConfig& cfg) {
    namespace fs = std::filesystem;
    const auto t_start = std::chrono::steady_clock::now();

    const auto all_records = load_manifest(cfg.dataset);
    const Taxonomy tax = Taxonomy::load(cfg.dataset + "/taxonomy.json");
    std::vector<ManifestRecord> train_records;
    for (const auto& r : all_records)
        if (r.split == "train") train_records.push_back(r);
    if (train_records.empty()) throw ConfigError("dataset has no training records: " + cfg.dataset);
    const auto samples = load_dataset_samples(cfg.dataset, train_records);

    const Vocab vocab = Vocab::build(instruction_corpus(tax));
    DiTModel model = DiTModel::init(cfg.model, cfg.attention, cfg.seed);
    ConditionEncoder encoder = ConditionEncoder::init(cfg.model, vocab, cfg.seed);
    ParamMap params;
    model.register_params(params);
    encoder.register_params(params);

    Adam opt;
    opt.lr = cfg.lr;
    opt.beta1 = cfg.beta1;
    opt.beta2 = cfg.beta2;
    opt.eps = cfg.adam_eps;

    std::error_code ec;
    fs::create_directories(cfg.out_dir, ec);
    if (ec) throw IoError("cannot create out dir " + cfg.out_dir + ": " + ec.message());
    const std::string loss_path = cfg.out_dir + "/loss.txt";
    std::ofstream loss_log(loss_path);
    if (!loss_log) throw IoError("cannot open loss log: " + loss_path);

    Rng rng(mix_seed(cfg.seed, 0x7a41eULL));
    TrainResult result;
    result.losses.reserve(std::size_t(cfg.steps));
    const float inv_batch = 1.0f / float(cfg.batch_size);

    for (int step = 0; step < cfg.steps; ++step) {
        float step_loss = 0.0f;
        for (int b = 0; b < cfg.batch_size; ++b) {
            const LoadedSample& s = samples[std::size_t(rng.below(samples.size()))];
            const int t_int = sample_timestep(rng, cfg.timesteps);
            const float sigma = float(t_int) / float(cfg.timesteps);
            Tensor eps = Tensor::randn(s.tgt.shape, rng);
            Tensor mask = noisy_mask(s.tgt.shape);
            Tensor x_t = noise_target(s.tgt, eps, sigma, mask);

            Tensor ref_in = s.ref;
            SemanticCondition cond;
            if (cfg.ablation == AblationMode::visual) {
                cond = SemanticCondition::dropped(cfg.model.resolved_cond_width());
            } else {
                cond = encoder.encode(s.rec.instruction, s.ref);
                cond = cfg_drop(cond, cfg.p_drop, rng);
            }
            if (cfg.ablation == AblationMode::semantic) ref_in = Tensor::zeros(s.ref.shape);

            Tensor velocity = model.forward(ref_in, x_t, cond, sigma);
            Tensor loss = scale(fm_loss(velocity, s.tgt, eps, mask), inv_batch);
            const float loss_val = loss.item();
            if (!std::isfinite(loss_val))
                throw NumericError("NaN loss at step " + std::to_string(step));
            step_loss += loss_val;
            backward(loss);
        }
        opt.step(params);
        Adam::zero_grad(params);
        result.losses.push_back(step_loss);
        loss_log << step << "," << step_loss << "\n";

        if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 && step + 1 < cfg.steps) {
            const std::string dir = cfg.out_dir + "/checkpoint_step" + std::to_string(step + 1);
            save_checkpoint(dir, model, encoder, cfg.ablation);
            loss_log.flush();
            detail::copy_file_over(loss_path, dir + "/loss.txt");
        }
    }
    loss_log.flush();

    result.checkpoint_dir = cfg.out_dir + "/checkpoint";
    save_checkpoint(result.checkpoint_dir, model, encoder, cfg.ablation);
    detail::copy_file_over(loss_path, result.checkpoint_dir + "/loss.txt");
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return result;
}

}  // namespace effectlab
