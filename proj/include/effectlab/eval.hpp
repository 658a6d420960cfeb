#pragma once

// Evaluation harness: regenerates target videos for dataset pairs with the
// Euler+CFG sampler and scores them with the renderer oracle (ETS) and the
// class probe. Sample generation fans out across worker threads with
// per-record seeds, so the report never depends on the thread count.

#include <algorithm>
#include <chrono>
#include <map>
#include <thread>

#include "effectlab/checkpoint.hpp"
#include "effectlab/flow.hpp"
#include "effectlab/metrics.hpp"
#include "effectlab/train.hpp"

namespace effectlab {

struct EvalOptions {
    bool open_set = false;
    int per_class = 4;
    SampleConfig sample;
    uint64_t seed = 0;
};

struct ClassScore {
    int class_id = 0;
    std::string label;
    double mean_ets = 0.0;
    int n = 0;
    int probe_correct = 0;
};

struct EvalReport {
    double mean_ets = 0.0;
    double probe_accuracy = 0.0;
    int n_samples = 0;
    double seconds = 0.0;
    std::vector<ClassScore> per_class;
    json loss_summary;  // null when the checkpoint has no loss log

    json to_json() const {
        json per = json::array();
        for (const auto& c : per_class)
            per.push_back(json{{"class_id", c.class_id},
                               {"label", c.label},
                               {"mean_ets", c.mean_ets},
                               {"n", c.n},
                               {"probe_correct", c.probe_correct}});
        return json{{"mean_ets", mean_ets},       {"probe_accuracy", probe_accuracy},
                    {"n_samples", n_samples},     {"runtime_seconds", seconds},
                    {"per_class", per},           {"loss_summary", loss_summary}};
    }
};

namespace detail {
inline json summarize_loss_log(const std::string& path) {
    std::ifstream is(path);
    if (!is) return json(nullptr);
    double first = 0.0, last = 0.0, lowest = 0.0;
    bool any = false;
    std::string line;
    while (std::getline(is, line)) {
        const auto comma = line.find(',');
        if (comma == std::string::npos) continue;
        const double v = std::atof(line.c_str() + comma + 1);
        if (!any) {
            first = lowest = v;
            any = true;
        }
        last = v;
        lowest = std::min(lowest, v);
    }
    if (!any) return json(nullptr);
    return json{{"first", first}, {"last", last}, {"min", lowest}};
}
}  // namespace detail

// Generate one sample for a record under the checkpoint's ablation policy.
inline Tensor generate_for_record(const Checkpoint& ckpt, const LoadedSample& s, const SampleConfig& sc,
                                  uint64_t record_seed) {
    NoGradGuard ng;
    Tensor ref_in = ckpt.ablation == AblationMode::semantic ? Tensor::zeros(s.ref.shape) : s.ref;
    SemanticCondition cond = ckpt.ablation == AblationMode::visual
                                 ? SemanticCondition::dropped(ckpt.model.cfg.resolved_cond_width())
                                 : ckpt.encoder.encode(s.rec.instruction, s.ref);
    const NoiseSchedule sched = shifted_sigmas(sc.steps, sc.shift);
    Rng rng(record_seed);
    VelocityFn velocity = [&ckpt](const Tensor& ref, const Tensor& x, float sigma, const SemanticCondition& c) {
        return ckpt.model.forward(ref, x, c, sigma);
    };
    return euler_sample(velocity, ref_in, s.first, s.tgt.shape, cond, sched, sc.guidance, rng,
                        sc.drop_reference_for_uncond);
}

inline EvalReport evaluate(const std::string& ckpt_dir, const std::string& data_dir, const EvalOptions& opts) {
    const auto t_start = std::chrono::steady_clock::now();
    const Checkpoint ckpt = load_checkpoint(ckpt_dir);
    const Taxonomy tax = Taxonomy::load(data_dir + "/taxonomy.json");
    const auto all_records = load_manifest(data_dir);

    const std::string want_split = opts.open_set ? "holdout" : "train";
    std::map<int, int> taken;
    std::vector<ManifestRecord> selected;
    for (const auto& r : all_records) {
        if (r.split != want_split) continue;
        if (taken[r.class_id] >= opts.per_class) continue;
        ++taken[r.class_id];
        selected.push_back(r);
    }
    if (selected.empty())
        throw ConfigError("no records with split '" + want_split + "' in " + data_dir);
    const auto samples = load_dataset_samples(data_dir, selected);

    struct PerSample {
        double ets = 0.0;
        int probe = -1;
    };
    std::vector<PerSample> results(samples.size());
    auto run_range = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            const Tensor gen = generate_for_record(ckpt, samples[i], opts.sample,
                                                   mix_seed(opts.seed, uint64_t(samples[i].rec.id)));
            results[i].ets = effect_transfer_score(gen, samples[i].rec.params);
            results[i].probe = class_probe(gen, tax);
        }
    };
    const int workers = std::min<int>(worker_threads(), int(samples.size()));
    if (workers <= 1) {
        run_range(0, samples.size());
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (samples.size() + workers - 1) / std::size_t(workers);
        for (int w = 0; w < workers; ++w) {
            const std::size_t lo = std::size_t(w) * chunk;
            const std::size_t hi = std::min(samples.size(), lo + chunk);
            if (lo < hi) pool.emplace_back(run_range, lo, hi);
        }
        for (auto& th : pool) th.join();
    }

    EvalReport report;
    std::map<int, ClassScore> per_class;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& rec = samples[i].rec;
        auto& c = per_class[rec.class_id];
        c.class_id = rec.class_id;
        c.label = rec.label;
        c.mean_ets += results[i].ets;
        c.probe_correct += results[i].probe == rec.class_id ? 1 : 0;
        ++c.n;
        report.mean_ets += results[i].ets;
        report.probe_accuracy += results[i].probe == rec.class_id ? 1.0 : 0.0;
    }
    report.n_samples = int(samples.size());
    report.mean_ets /= double(samples.size());
    report.probe_accuracy /= double(samples.size());
    for (auto& [_, c] : per_class) {
        c.mean_ets /= double(c.n);
        report.per_class.push_back(c);
    }
    report.loss_summary = detail::summarize_loss_log(ckpt_dir + "/loss.txt");
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return report;
}

}  // namespace effectlab
