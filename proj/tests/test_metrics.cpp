#include <gtest/gtest.h>

#include <filesystem>

#include "effectlab/metrics.hpp"

using namespace effectlab;

namespace {

std::string temp_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(dir);
    return dir.string();
}

}  // namespace

TEST(Pearson, SelfCorrelationIsOne) {
    Rng rng(1);
    std::vector<float> x(64);
    for (auto& v : x) v = rng.normal_f();
    EXPECT_NEAR(pearson(x.data(), x.data(), x.size()), 1.0, 1e-12);
}

TEST(Pearson, ZeroVarianceGivesZero) {
    std::vector<float> flat(16, 3.0f), varied(16);
    Rng rng(2);
    for (auto& v : varied) v = rng.normal_f();
    EXPECT_EQ(pearson(flat.data(), varied.data(), 16), 0.0);
    EXPECT_EQ(pearson(varied.data(), flat.data(), 16), 0.0);
}

TEST(Ets, GroundTruthScoresOne) {
    const Taxonomy tax;
    const auto classes = expand_taxonomy(tax);
    Rng rng(3);
    for (int k : {0, 9, 22}) {
        const EffectParams params = params_for_class(classes[std::size_t(k)], tax, 4);
        Tensor subj = render_subject(rng, tax.channels, tax.tgt_h, tax.tgt_w);
        Tensor video = compose_video(subj, params, tax.tgt_frames);
        EXPECT_NEAR(effect_transfer_score(video, params), 1.0, 1e-9);
    }
}

TEST(Ets, StaticVideoScoresZero) {
    const Taxonomy tax;
    const EffectParams params = params_for_class(expand_taxonomy(tax)[5], tax, 0);
    Rng rng(4);
    Tensor subj = render_subject(rng, tax.channels, tax.tgt_h, tax.tgt_w);
    Tensor video = compose_video(subj, EffectParams{0, 0, -1, 1, 0, 0, 0.0f, 0}, tax.tgt_frames);
    EXPECT_EQ(effect_transfer_score(video, params), 0.0);
}

TEST(Ets, RandomVideosScoreNearZero) {
    const Taxonomy tax;
    const EffectParams params = params_for_class(expand_taxonomy(tax)[13], tax, 2);
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(mix_seed(55, seed));
        Tensor video = Tensor::randn({tax.channels, tax.tgt_frames, tax.tgt_h, tax.tgt_w}, rng);
        EXPECT_LT(std::abs(effect_transfer_score(video, params)), 0.2) << "seed " << seed;
    }
}

TEST(Ets, ZeroVarianceOracleWarnsAndReturnsZero) {
    const Taxonomy tax;
    EffectParams zero_amp;
    zero_amp.pattern_kind = 0;
    zero_amp.region_id = -1;
    zero_amp.channel = 1;
    zero_amp.amplitude = 0.0f;
    Rng rng(6);
    Tensor video = Tensor::randn({tax.channels, 4, 8, 8}, rng);
    bool warned = false;
    EXPECT_EQ(effect_transfer_score(video, zero_amp, &warned), 0.0);
    EXPECT_TRUE(warned);
}

TEST(ClassProbe, GroundTruthTargetsClassifyPerfectly) {
    const Taxonomy tax;
    const std::string dir = temp_dir("effectlab_probe_ds");
    const auto records = emit_dataset(tax, 1, dir, 77);
    int correct = 0;
    for (const auto& r : records) {
        Tensor tgt = read_eftx(dir + "/" + r.tgt_file);
        if (class_probe(tgt, tax) == r.class_id) ++correct;
    }
    EXPECT_EQ(correct, int(records.size()));  // 100% on the 27-class toy set
}

TEST(ClassProbe, AllZeroVideoPicksClassZeroByTieBreak) {
    const Taxonomy tax;
    Tensor video = Tensor::zeros({tax.channels, tax.tgt_frames, tax.tgt_h, tax.tgt_w});
    EXPECT_EQ(class_probe(video, tax), 0);
}
