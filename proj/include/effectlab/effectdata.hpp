#pragma once

// Procedural paired-effect dataset: a compositional taxonomy (element x
// pattern x region, plus transformation classes), seeded template
// instructions, and a renderer that draws a random subject on channel 0 and
// a class-determined overlay on a dedicated effect channel. Reference and
// target of a pair share the class and the sampled overlay parameters but
// never the subject. Overlays are pure functions of (params, phase, grid),
// so the renderer doubles as the evaluation oracle.

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "effectlab/config.hpp"
#include "effectlab/tensor.hpp"

namespace effectlab {

struct Taxonomy {
    std::vector<std::string> elements = {"fire", "ice", "light"};
    std::vector<std::string> patterns = {"particle", "wave", "ring"};
    std::vector<std::string> regions = {"face", "arms", "full body"};
    std::vector<std::string> transformations = {};
    int tgt_frames = 5, tgt_h = 32, tgt_w = 32;
    int ref_frames = 3, ref_h = 16, ref_w = 16;
    int channels = 4;
    double holdout_fraction = 0.2;

    int num_classes() const {
        return int(elements.size() * patterns.size() * regions.size() + transformations.size());
    }

    json to_json() const {
        return json{{"elements", elements},
                    {"patterns", patterns},
                    {"regions", regions},
                    {"transformations", transformations},
                    {"target", {{"frames", tgt_frames}, {"height", tgt_h}, {"width", tgt_w}}},
                    {"reference", {{"frames", ref_frames}, {"height", ref_h}, {"width", ref_w}}},
                    {"channels", channels},
                    {"holdout_fraction", holdout_fraction}};
    }

    static Taxonomy from_json(const json& j) {
        Taxonomy t;
        t.elements = j.value("elements", t.elements);
        t.patterns = j.value("patterns", t.patterns);
        t.regions = j.value("regions", t.regions);
        t.transformations = j.value("transformations", t.transformations);
        if (j.contains("target")) {
            t.tgt_frames = j["target"].value("frames", t.tgt_frames);
            t.tgt_h = j["target"].value("height", t.tgt_h);
            t.tgt_w = j["target"].value("width", t.tgt_w);
        }
        if (j.contains("reference")) {
            t.ref_frames = j["reference"].value("frames", t.ref_frames);
            t.ref_h = j["reference"].value("height", t.ref_h);
            t.ref_w = j["reference"].value("width", t.ref_w);
        }
        t.channels = j.value("channels", t.channels);
        t.holdout_fraction = j.value("holdout_fraction", t.holdout_fraction);
        if (t.elements.empty() || t.patterns.empty() || t.regions.empty())
            throw ConfigError("taxonomy attribute lists must be non-empty");
        if (t.channels < 2) throw ConfigError("taxonomy needs at least 2 channels (subject + effect)");
        if (t.tgt_frames < 2 || t.ref_frames < 2) throw ConfigError("videos need at least 2 frames");
        if (t.holdout_fraction < 0.0 || t.holdout_fraction >= 1.0)
            throw ConfigError("holdout_fraction must lie in [0,1)");
        return t;
    }

    static Taxonomy load(const std::string& path) { return from_json(load_json_file(path)); }
    void save(const std::string& path) const { save_json_file(path, to_json()); }
};

struct ClassDescriptor {
    int class_id = 0;
    bool is_transformation = false;
    int element = 0, pattern = 0, region = 0;  // attribute indices
    int transformation = 0;
    std::string label;
};

// Full cross product, element-major then pattern then region, followed by
// the transformation entries. Ordering is deterministic.
inline std::vector<ClassDescriptor> expand_taxonomy(const Taxonomy& tax) {
    std::vector<ClassDescriptor> out;
    out.reserve(std::size_t(tax.num_classes()));
    int id = 0;
    for (std::size_t e = 0; e < tax.elements.size(); ++e)
        for (std::size_t p = 0; p < tax.patterns.size(); ++p)
            for (std::size_t r = 0; r < tax.regions.size(); ++r) {
                ClassDescriptor c;
                c.class_id = id++;
                c.element = int(e);
                c.pattern = int(p);
                c.region = int(r);
                c.label = tax.elements[e] + " " + tax.patterns[p] + " " + tax.regions[r];
                out.push_back(std::move(c));
            }
    for (std::size_t t = 0; t < tax.transformations.size(); ++t) {
        ClassDescriptor c;
        c.class_id = id++;
        c.is_transformation = true;
        c.transformation = int(t);
        c.label = tax.transformations[t];
        out.push_back(std::move(c));
    }
    return out;
}

// Ground-truth overlay parameters. theta_idx in [0,8) is the one per-pair
// degree of freedom: it offsets the pattern spatially, is shared by the
// reference and target of a pair, and never appears in the instruction text.
struct EffectParams {
    int pattern_kind = 0;  // 0 ring, 1 wave, 2 particle; 100+k transformation morphs
    int variant = 0;       // extra pattern variation when attribute lists exceed the base kinds
    int region_id = -1;    // -1: full grid
    int channel = 1;
    int theta_idx = 0;
    uint64_t seed = 0;  // canonical per-class seed (particle bases, crack lines)
    float amplitude = 2.0f;
    int envelope_freq = 0;

    json to_json() const {
        return json{{"pattern_kind", pattern_kind}, {"variant", variant},   {"region_id", region_id},
                    {"channel", channel},           {"theta_idx", theta_idx}, {"seed", seed},
                    {"amplitude", amplitude},       {"envelope_freq", envelope_freq}};
    }

    static EffectParams from_json(const json& j) {
        EffectParams p;
        p.pattern_kind = j.at("pattern_kind").get<int>();
        p.variant = j.value("variant", 0);
        p.region_id = j.at("region_id").get<int>();
        p.channel = j.at("channel").get<int>();
        p.theta_idx = j.at("theta_idx").get<int>();
        p.seed = j.at("seed").get<uint64_t>();
        p.amplitude = j.at("amplitude").get<float>();
        p.envelope_freq = j.value("envelope_freq", 0);
        return p;
    }
};

inline constexpr int kThetaLevels = 8;

inline EffectParams params_for_class(const ClassDescriptor& cls, const Taxonomy& tax, int theta_idx) {
    EffectParams p;
    p.theta_idx = theta_idx;
    p.seed = mix_seed(0xeffec7da7aULL, uint64_t(cls.class_id));
    if (cls.is_transformation) {
        p.pattern_kind = 100 + cls.transformation % 3;
        p.variant = cls.transformation / 3;
        p.region_id = -1;
        p.channel = 0;
        p.amplitude = -1.2f;
    } else {
        p.pattern_kind = cls.pattern % 3;
        p.variant = cls.pattern / 3;
        p.region_id = cls.region;
        p.channel = 1 + cls.element % (tax.channels - 1);
        p.amplitude = 2.0f;
        p.envelope_freq = cls.element / (tax.channels - 1);
    }
    return p;
}

namespace detail {

// Region masks in normalized (u=row, v=col) coordinates; id -1 or id%3==2
// is the full grid.
inline bool in_region(int region_id, double u, double v) {
    if (region_id < 0) return true;
    switch (region_id % 3) {
        case 0: return u >= 0.08 && u < 0.42 && v >= 0.30 && v < 0.70;           // face
        case 1: return (v < 0.22 || v >= 0.78) && u >= 0.25 && u < 0.85;         // arms
        default: return true;                                                    // full body
    }
}

inline double frac(double x) { return x - std::floor(x); }

}  // namespace detail

// Phase-parameterized overlay on the params channel. Zero at phase 0 (the
// clean first frame), independent of the subject, identical in normalized
// coordinates across grid sizes.
inline Tensor render_effect(const EffectParams& params, double phase, int channels, int h, int w) {
    if (params.channel < 0 || params.channel >= channels) throw ShapeError("render_effect: bad channel");
    Tensor out = Tensor::zeros({channels, h, w});
    if (phase <= 0.0) return out;
    double env = phase;
    if (params.envelope_freq > 0)
        env *= 0.6 + 0.4 * std::cos(6.2831853071795864769 * params.envelope_freq * phase);
    const float a = float(params.amplitude * env);
    const double theta = double(params.theta_idx) / double(kThetaLevels);
    const double two_pi = 6.2831853071795864769;
    float* ch = out.mut_ptr() + std::size_t(params.channel) * h * w;
    auto cell = [&](int r, int c) -> float& { return ch[std::size_t(r) * w + c]; };

    if (params.pattern_kind == 0) {
        // expanding ring: hard annulus, center displaced by theta
        const double cu = 0.5 + 0.12 * std::sin(two_pi * theta);
        const double cv = 0.5 + 0.12 * std::cos(two_pi * theta);
        const double radius = phase * 0.45;
        const double half_width = 0.09 + 0.02 * params.variant;
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) {
                const double u = (r + 0.5) / h, v = (c + 0.5) / w;
                if (!detail::in_region(params.region_id, u, v)) continue;
                const double d = std::sqrt((u - cu) * (u - cu) + (v - cv) * (v - cv));
                if (std::abs(d - radius) <= half_width) cell(r, c) = a;
            }
    } else if (params.pattern_kind == 1) {
        // translating sinusoid band
        const double cycles = 2.0 + params.variant;
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) {
                const double u = (r + 0.5) / h, v = (c + 0.5) / w;
                if (!detail::in_region(params.region_id, u, v)) continue;
                cell(r, c) = a * float(std::sin(two_pi * (cycles * v + theta + phase)));
            }
    } else if (params.pattern_kind == 2) {
        // seeded drifting point splats
        Rng prng(params.seed);
        const int count = 5 + params.variant;
        const double sigma = 0.07;
        for (int pt = 0; pt < count; ++pt) {
            const double bu = prng.uniform(0.1, 0.9);
            const double bv = prng.uniform(0.1, 0.9);
            const double velu = prng.uniform(-0.3, 0.3);
            const double velv = prng.uniform(-0.3, 0.3);
            const double pu = detail::frac(bu + (theta + 0.35 * phase) * velu);
            const double pv = detail::frac(bv + (theta + 0.35 * phase) * velv);
            for (int r = 0; r < h; ++r)
                for (int c = 0; c < w; ++c) {
                    const double u = (r + 0.5) / h, v = (c + 0.5) / w;
                    if (!detail::in_region(params.region_id, u, v)) continue;
                    const double d2 = (u - pu) * (u - pu) + (v - pv) * (v - pv);
                    cell(r, c) += a * float(std::exp(-d2 / (2.0 * sigma * sigma)));
                }
        }
    } else if (params.pattern_kind == 100) {
        // melt: wavy front rising from the bottom
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) {
                const double u = (r + 0.5) / h, v = (c + 0.5) / w;
                const double front = 1.0 - 0.55 * phase + 0.12 * std::sin(two_pi * (2.0 * v + theta));
                if (u > front) cell(r, c) = a;
            }
    } else if (params.pattern_kind == 101) {
        // shatter: seeded crack lines
        Rng prng(mix_seed(params.seed, 0x5aULL));
        const int lines = 6;
        std::vector<std::array<double, 3>> cracks;
        for (int l = 0; l < lines; ++l) {
            const double pu = prng.uniform(0.2, 0.8);
            const double pv = prng.uniform(0.2, 0.8);
            const double ang = prng.uniform(0.0, 3.14159265358979) + two_pi * theta;
            cracks.push_back({pu, pv, ang});
        }
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) {
                const double u = (r + 0.5) / h, v = (c + 0.5) / w;
                for (const auto& k : cracks) {
                    const double d = std::abs(-(u - k[0]) * std::sin(k[2]) + (v - k[1]) * std::cos(k[2]));
                    const double along = (u - k[0]) * std::cos(k[2]) + (v - k[1]) * std::sin(k[2]);
                    if (d < 0.025 && std::abs(along) < 0.35 * phase + 0.05) {
                        cell(r, c) = a;
                        break;
                    }
                }
            }
    } else if (params.pattern_kind == 102) {
        // dissolve: seeded per-cell noise mask filling in with phase
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) {
                const uint64_t hsh = mix_seed(params.seed, uint64_t(params.theta_idx), uint64_t(r) * 131071u + c);
                const double gate = double(hsh >> 11) * 0x1.0p-53;
                if (gate < 0.6 * phase) cell(r, c) = a;
            }
    } else {
        throw ConfigError("render_effect: unknown pattern kind " + std::to_string(params.pattern_kind));
    }
    return out;
}

// Random simple shape on channel 0.
inline Tensor render_subject(Rng& rng, int channels, int h, int w) {
    Tensor out = Tensor::zeros({channels, h, w});
    const int kind = int(rng.below(3));
    const double cu = rng.uniform(0.3, 0.7);
    const double cv = rng.uniform(0.3, 0.7);
    const double size = rng.uniform(0.15, 0.35);
    const float amp = float(rng.uniform(0.8, 1.2));
    float* ch = out.mut_ptr();
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const double u = (r + 0.5) / h, v = (c + 0.5) / w;
            bool inside = false;
            if (kind == 0) {
                inside = std::abs(u - cu) < size && std::abs(v - cv) < size * 0.7;
            } else if (kind == 1) {
                inside = (u - cu) * (u - cu) + (v - cv) * (v - cv) < size * size;
            } else {
                inside = std::abs(u - cu) + std::abs(v - cv) < size;
            }
            if (inside) ch[std::size_t(r) * w + c] = amp;
        }
    return out;
}

// Subject repeated across frames plus the overlay per frame; the overlay
// phase advances linearly and is 0 on the first frame.
inline Tensor compose_video(const Tensor& subject, const EffectParams& params, int frames) {
    if (subject.rank() != 3) throw ShapeError("compose_video: subject must be [C,H,W]");
    if (frames < 2) throw ShapeError("compose_video: need at least 2 frames");
    const int C = subject.shape[0], H = subject.shape[1], W = subject.shape[2];
    Tensor out = Tensor::zeros({C, frames, H, W});
    const std::size_t hw = std::size_t(H) * W;
    for (int f = 0; f < frames; ++f) {
        const double phase = double(f) / double(frames - 1);
        Tensor overlay = render_effect(params, phase, C, H, W);
        for (int c = 0; c < C; ++c) {
            const float* s = subject.ptr() + std::size_t(c) * hw;
            const float* o = overlay.ptr() + std::size_t(c) * hw;
            float* d = out.mut_ptr() + (std::size_t(c) * frames + f) * hw;
            for (std::size_t i = 0; i < hw; ++i) d[i] = s[i] + o[i];
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// instructions

namespace detail {

inline const std::vector<std::string>& atmospheric_templates() {
    static const std::vector<std::string> t = {
        "add a {element} {pattern} effect around the {region}",
        "apply a {pattern} of {element} to the {region}",
        "give the subject a {element} {pattern} over the {region}",
        "surround the {region} with a {element} {pattern}",
    };
    return t;
}

inline const std::vector<std::string>& transformation_templates() {
    static const std::vector<std::string> t = {
        "make the subject undergo {transformation}",
        "apply a {transformation} transformation to the subject",
        "transform the subject with {transformation}",
    };
    return t;
}

inline std::string replace_all(std::string s, const std::string& from, const std::string& to) {
    std::size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
    return s;
}

}  // namespace detail

inline std::string fill_template(const std::string& tmpl, const ClassDescriptor& cls, const Taxonomy& tax) {
    std::string s = tmpl;
    if (cls.is_transformation) {
        s = detail::replace_all(s, "{transformation}", tax.transformations[std::size_t(cls.transformation)]);
    } else {
        s = detail::replace_all(s, "{element}", tax.elements[std::size_t(cls.element)]);
        s = detail::replace_all(s, "{pattern}", tax.patterns[std::size_t(cls.pattern)]);
        s = detail::replace_all(s, "{region}", tax.regions[std::size_t(cls.region)]);
    }
    return s;
}

// Seeded template choice; every template names all class attributes, so
// instructions are distinct across classes for any seed.
inline std::string make_instruction(const ClassDescriptor& cls, const Taxonomy& tax, Rng& rng) {
    const auto& bank = cls.is_transformation ? detail::transformation_templates() : detail::atmospheric_templates();
    return fill_template(bank[std::size_t(rng.below(bank.size()))], cls, tax);
}

inline std::string make_caption(const ClassDescriptor& cls, const Taxonomy& tax) {
    if (cls.is_transformation)
        return fill_template("a video of a subject undergoing {transformation}", cls, tax);
    return fill_template("a video of a subject with a {element} {pattern} effect on the {region}", cls, tax);
}

// Corpus for the word-piece vocab: template words plus every attribute name.
inline std::vector<std::string> instruction_corpus(const Taxonomy& tax) {
    std::vector<std::string> corpus;
    for (const auto& t : detail::atmospheric_templates()) {
        auto s = detail::replace_all(t, "{element}", " ");
        s = detail::replace_all(s, "{pattern}", " ");
        corpus.push_back(detail::replace_all(s, "{region}", " "));
    }
    for (const auto& t : detail::transformation_templates())
        corpus.push_back(detail::replace_all(t, "{transformation}", " "));
    corpus.push_back("a video of a subject with a effect on the undergoing");
    for (const auto& v : tax.elements) corpus.push_back(v);
    for (const auto& v : tax.patterns) corpus.push_back(v);
    for (const auto& v : tax.regions) corpus.push_back(v);
    for (const auto& v : tax.transformations) corpus.push_back(v);
    return corpus;
}

// ---------------------------------------------------------------------------
// multi-resolution policy

struct ResolutionPolicy {
    int tgt_short = 704;
    int tgt_long_cap = 1280;
    int ref_short = 448;
    int ref_long_cap = 832;
    int granularity = 32;
    int toy_divisor = 22;
};

enum class StreamKind { reference, target };

// Shorter side pinned to the stream standard; longer side scaled to preserve
// aspect, snapped to the nearest granularity multiple, clamped to the cap.
inline std::pair<int, int> resolve_size(int w, int h, const ResolutionPolicy& policy, StreamKind stream) {
    if (w < 1 || h < 1) throw ShapeError("resolve_size: extents must be >= 1");
    const int short_std = stream == StreamKind::reference ? policy.ref_short : policy.tgt_short;
    const int cap = stream == StreamKind::reference ? policy.ref_long_cap : policy.tgt_long_cap;
    const bool w_short = w <= h;
    const double shorter = w_short ? w : h;
    const double longer = w_short ? h : w;
    const double scaled = longer * double(short_std) / shorter;
    long snapped = std::lround(scaled / policy.granularity) * policy.granularity;
    if (snapped < short_std) snapped = short_std;
    if (snapped > cap) snapped = cap;
    return w_short ? std::make_pair(short_std, int(snapped)) : std::make_pair(int(snapped), short_std);
}

inline std::pair<int, int> toy_size(const ResolutionPolicy& policy, StreamKind stream) {
    const int short_std = stream == StreamKind::reference ? policy.ref_short : policy.tgt_short;
    const int s = int(std::lround(double(short_std) / policy.toy_divisor / 4.0)) * 4;
    return {s, s};
}

// ---------------------------------------------------------------------------
// dataset emission

struct ManifestRecord {
    int id = 0;
    int class_id = 0;
    std::string label, split, caption, instruction;
    std::string ref_file, first_file, tgt_file;  // relative to the dataset dir
    EffectParams params;

    json to_json() const {
        return json{{"id", id},           {"class_id", class_id}, {"label", label},
                    {"split", split},     {"caption", caption},   {"instruction", instruction},
                    {"ref", ref_file},    {"first", first_file},  {"target", tgt_file},
                    {"effect_params", params.to_json()}};
    }

    static ManifestRecord from_json(const json& j) {
        ManifestRecord r;
        r.id = j.at("id").get<int>();
        r.class_id = j.at("class_id").get<int>();
        r.label = j.at("label").get<std::string>();
        r.split = j.at("split").get<std::string>();
        r.caption = j.at("caption").get<std::string>();
        r.instruction = j.at("instruction").get<std::string>();
        r.ref_file = j.at("ref").get<std::string>();
        r.first_file = j.at("first").get<std::string>();
        r.tgt_file = j.at("target").get<std::string>();
        r.params = EffectParams::from_json(j.at("effect_params"));
        return r;
    }
};

// Held-out classes from a seeded shuffle; floor(fraction * classes) of them.
inline std::vector<bool> holdout_flags(int n_classes, double fraction, uint64_t seed) {
    std::vector<int> order(static_cast<std::size_t>(n_classes));
    for (int i = 0; i < n_classes; ++i) order[std::size_t(i)] = i;
    Rng rng(mix_seed(seed, 0x511f7ULL));
    for (int i = n_classes - 1; i > 0; --i)
        std::swap(order[std::size_t(i)], order[std::size_t(rng.below(uint64_t(i) + 1))]);
    std::vector<bool> holdout(std::size_t(n_classes), false);
    const int k = int(fraction * n_classes);
    for (int i = 0; i < k; ++i) holdout[std::size_t(order[std::size_t(i)])] = true;
    return holdout;
}

// Writes per-sample EFTX videos plus manifest.jsonl, taxonomy.json and
// vocab input corpus artifacts. Byte-reproducible from (taxonomy, n, seed):
// per-sample streams derive as mix(seed, class_id, index).
inline std::vector<ManifestRecord> emit_dataset(const Taxonomy& tax, int per_class, const std::string& out_dir,
                                                uint64_t seed) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create dataset dir " + out_dir + ": " + ec.message());
    const auto classes = expand_taxonomy(tax);
    const auto holdout = holdout_flags(int(classes.size()), tax.holdout_fraction, seed);

    std::vector<ManifestRecord> records;
    records.reserve(classes.size() * std::size_t(per_class));
    int id = 0;
    for (const auto& cls : classes) {
        for (int i = 0; i < per_class; ++i) {
            Rng rng(mix_seed(seed, uint64_t(cls.class_id), uint64_t(i)));
            const int theta_idx = int(rng.below(kThetaLevels));
            const EffectParams params = params_for_class(cls, tax, theta_idx);
            const Tensor subj_ref = render_subject(rng, tax.channels, tax.ref_h, tax.ref_w);
            const Tensor subj_tgt = render_subject(rng, tax.channels, tax.tgt_h, tax.tgt_w);
            const Tensor ref_video = compose_video(subj_ref, params, tax.ref_frames);
            const Tensor tgt_video = compose_video(subj_tgt, params, tax.tgt_frames);

            ManifestRecord rec;
            rec.id = id;
            rec.class_id = cls.class_id;
            rec.label = cls.label;
            rec.split = holdout[std::size_t(cls.class_id)] ? "holdout" : "train";
            rec.instruction = make_instruction(cls, tax, rng);
            rec.caption = make_caption(cls, tax);
            rec.params = params;
            char stem[32];
            std::snprintf(stem, sizeof(stem), "%05d", id);
            rec.ref_file = std::string(stem) + "_ref.eftx";
            rec.first_file = std::string(stem) + "_first.eftx";
            rec.tgt_file = std::string(stem) + "_tgt.eftx";

            write_eftx(out_dir + "/" + rec.ref_file, ref_video);
            write_eftx(out_dir + "/" + rec.first_file, subj_tgt);
            write_eftx(out_dir + "/" + rec.tgt_file, tgt_video);
            records.push_back(std::move(rec));
            ++id;
        }
    }

    std::ofstream manifest(out_dir + "/manifest.jsonl");
    if (!manifest) throw IoError("cannot write manifest in " + out_dir);
    for (const auto& r : records) manifest << r.to_json().dump() << "\n";
    if (!manifest) throw IoError("manifest write failed in " + out_dir);
    tax.save(out_dir + "/taxonomy.json");
    return records;
}

inline std::vector<ManifestRecord> load_manifest(const std::string& dataset_dir) {
    std::ifstream is(dataset_dir + "/manifest.jsonl");
    if (!is) throw IoError("cannot open manifest in " + dataset_dir);
    std::vector<ManifestRecord> records;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        try {
            records.push_back(ManifestRecord::from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw IoError("bad manifest line in " + dataset_dir + ": " + e.what());
        }
    }
    return records;
}

// ---------------------------------------------------------------------------
// PGM inspection dumps: binary P5, channels tiled vertically, frames
// horizontally, fixed value window so bytes depend only on the tensor.

inline void write_pgm_grid(const std::string& path, const Tensor& video, float lo = -2.5f, float hi = 2.5f) {
    if (video.rank() != 4) throw ShapeError("write_pgm_grid: video must be [C,F,H,W]");
    const int C = video.shape[0], F = video.shape[1], H = video.shape[2], W = video.shape[3];
    const int out_h = C * H, out_w = F * W;
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for write: " + path);
    os << "P5\n" << out_w << " " << out_h << "\n255\n";
    std::vector<unsigned char> row(static_cast<std::size_t>(out_w));
    for (int c = 0; c < C; ++c)
        for (int r = 0; r < H; ++r) {
            for (int f = 0; f < F; ++f)
                for (int x = 0; x < W; ++x) {
                    const float v = (*video.data)[((std::size_t(c) * F + f) * H + r) * W + x];
                    const float t = (v - lo) / (hi - lo);
                    const int px = int(std::lround(std::min(1.0f, std::max(0.0f, t)) * 255.0f));
                    row[std::size_t(f) * W + x] = (unsigned char)px;
                }
            os.write(reinterpret_cast<const char*>(row.data()), std::streamsize(row.size()));
        }
    if (!os) throw IoError("write failed: " + path);
}

}  // namespace effectlab
