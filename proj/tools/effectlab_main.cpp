// effectlab — reference-conditioned video effect transfer at desk scale.
//
//   synth      generate a procedural paired-effect dataset
//   train      train the model on a synthesized dataset
//   sample     generate a target video from a reference video + first frame
//   eval       regenerate dataset pairs and score effect transfer
//   gradcheck  finite-difference checks for every differentiable op

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>

#include "effectlab/eval.hpp"
#include "effectlab/gradcheck.hpp"

using namespace effectlab;

namespace {

int cmd_synth(const std::string& taxonomy_path, int per_class, const std::string& out_dir, uint64_t seed) {
    const Taxonomy tax = taxonomy_path.empty() ? Taxonomy{} : Taxonomy::load(taxonomy_path);
    const auto records = emit_dataset(tax, per_class, out_dir, seed);
    int holdout = 0;
    for (const auto& r : records) holdout += r.split == "holdout" ? 1 : 0;
    std::printf("wrote %zu records (%d holdout) across %d classes to %s\n", records.size(), holdout,
                tax.num_classes(), out_dir.c_str());
    return 0;
}

int cmd_train(const std::string& config_path) {
    const TrainConfig cfg = TrainConfig::from_json(load_json_file(config_path));
    const TrainResult result = train_loop(cfg);
    std::printf("trained %d steps in %.1fs; loss %.4f -> %.4f; checkpoint at %s\n", cfg.steps, result.seconds,
                result.losses.front(), result.losses.back(), result.checkpoint_dir.c_str());
    return 0;
}

int cmd_sample(const std::string& ckpt_dir, const std::string& ref_path, const std::string& image_path,
               const std::string& out_dir, const SampleConfig& sc, int frames, const std::string& instruction) {
    const Checkpoint ckpt = load_checkpoint(ckpt_dir);
    const Tensor ref = read_eftx(ref_path);
    const Tensor image = read_eftx(image_path);
    if (ref.rank() != 4) throw ShapeError("reference must be a [C,F,H,W] EFTX video");
    if (image.rank() != 3) throw ShapeError("target image must be a [C,H,W] EFTX tensor");
    if (ref.shape[0] != ckpt.model.cfg.latent_channels || image.shape[0] != ckpt.model.cfg.latent_channels)
        throw ShapeError("channel count does not match the checkpoint config");

    LoadedSample s;
    s.ref = ref;
    s.first = image;
    s.tgt = Tensor::zeros({image.shape[0], frames, image.shape[1], image.shape[2]});
    s.rec.instruction = instruction;
    s.rec.id = 0;
    const Tensor video = generate_for_record(ckpt, s, sc, mix_seed(sc.seed, 0x5a3eULL));

    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create out dir " + out_dir + ": " + ec.message());
    write_eftx(out_dir + "/video.eftx", video);
    write_pgm_grid(out_dir + "/frames.pgm", video);
    std::printf("wrote %s/video.eftx and %s/frames.pgm\n", out_dir.c_str(), out_dir.c_str());
    return 0;
}

int cmd_eval(const std::string& ckpt_dir, const std::string& data_dir, const EvalOptions& opts,
             const std::string& out_path) {
    const EvalReport report = evaluate(ckpt_dir, data_dir, opts);
    save_json_file(out_path, report.to_json());
    std::printf("evaluated %d samples: mean ETS %.4f, probe accuracy %.3f (%.1fs) -> %s\n", report.n_samples,
                report.mean_ets, report.probe_accuracy, report.seconds, out_path.c_str());
    return 0;
}

int cmd_gradcheck(uint64_t seed, int trials) {
    const auto entries = run_gradcheck_suite(seed, trials);
    bool all_pass = true;
    std::printf("%-22s %12s %10s  %s\n", "op", "max_rel_err", "tolerance", "result");
    for (const auto& e : entries) {
        std::printf("%-22s %12.3e %10.0e  %s\n", e.name.c_str(), e.max_rel_err, e.tolerance,
                    e.pass ? "PASS" : "FAIL");
        all_pass = all_pass && e.pass;
    }
    return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"effectlab: reference-conditioned video effect transfer"};
    app.require_subcommand(1);

    auto* synth = app.add_subcommand("synth", "generate a procedural paired-effect dataset");
    std::string taxonomy_path;
    int per_class = 2;
    std::string synth_out = "dataset";
    uint64_t synth_seed = 0;
    synth->add_option("--taxonomy", taxonomy_path, "taxonomy config (JSON); default built-in 27-class taxonomy");
    synth->add_option("--per-class", per_class, "paired records per class")->default_val(2);
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--seed", synth_seed, "generation seed")->default_val(0);

    auto* train = app.add_subcommand("train", "train on a synthesized dataset");
    std::string train_config;
    train->add_option("--config", train_config, "train config (JSON)")->required();

    auto* sample = app.add_subcommand("sample", "generate a target video");
    std::string ckpt_dir, ref_path, image_path, sample_out = "sample_out", instruction;
    SampleConfig sc;
    int frames = 5;
    sample->add_option("--ckpt", ckpt_dir, "checkpoint directory")->required();
    sample->add_option("--ref", ref_path, "reference video (EFTX)")->required();
    sample->add_option("--image", image_path, "target first frame (EFTX)")->required();
    sample->add_option("--out", sample_out, "output directory")->required();
    sample->add_option("--steps", sc.steps, "denoising steps")->default_val(30);
    sample->add_option("--guidance", sc.guidance, "classifier-free guidance scale")->default_val(6.0f);
    sample->add_option("--shift", sc.shift, "noise schedule shift")->default_val(16.0f);
    sample->add_option("--seed", sc.seed, "sampling seed")->default_val(0);
    sample->add_option("--frames", frames, "target frame count")->default_val(5);
    sample->add_option("--instruction", instruction, "effect instruction text");
    sample->add_flag("--drop-ref-uncond", sc.drop_reference_for_uncond,
                     "zero the reference latent on the unconditional branch");

    auto* eval = app.add_subcommand("eval", "score effect transfer on a dataset");
    std::string eval_ckpt, eval_data, eval_out = "eval_report.json";
    EvalOptions opts;
    eval->add_option("--ckpt", eval_ckpt, "checkpoint directory")->required();
    eval->add_option("--data", eval_data, "dataset directory")->required();
    eval->add_flag("--open-set", opts.open_set, "evaluate held-out classes only");
    eval->add_option("--out", eval_out, "report path (JSON)");
    eval->add_option("--per-class", opts.per_class, "samples per class")->default_val(4);
    eval->add_option("--steps", opts.sample.steps, "denoising steps")->default_val(30);
    eval->add_option("--guidance", opts.sample.guidance, "guidance scale")->default_val(6.0f);
    eval->add_option("--shift", opts.sample.shift, "noise schedule shift")->default_val(16.0f);
    eval->add_option("--seed", opts.seed, "evaluation seed")->default_val(0);

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks");
    uint64_t gc_seed = 0;
    int gc_trials = 20;
    gradcheck->add_option("--seed", gc_seed, "base seed")->default_val(0);
    gradcheck->add_option("--trials", gc_trials, "seeded trials per op")->default_val(20);

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return cmd_synth(taxonomy_path, per_class, synth_out, synth_seed);
        if (train->parsed()) return cmd_train(train_config);
        if (sample->parsed()) return cmd_sample(ckpt_dir, ref_path, image_path, sample_out, sc, frames, instruction);
        if (eval->parsed()) {
            opts.sample.seed = opts.seed;
            return cmd_eval(eval_ckpt, eval_data, opts, eval_out);
        }
        if (gradcheck->parsed()) return cmd_gradcheck(gc_seed, gc_trials);
    } catch (const IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return kExitIo;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return kExitNumeric;
    } catch (const ShapeError& e) {
        std::fprintf(stderr, "shape error: %s\n", e.what());
        return kExitShape;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitGeneric;
    }
    return 0;
}
