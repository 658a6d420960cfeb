#pragma once

// Toy stand-in for the MLLM understanding stage: a word-level tokenizer and
// embedder for instruction text (reasoning stream), a small transformer over
// reference-video patches pooled to a fixed token count (understanding
// stream), and the connector MLP that bridges into the model's condition
// width. Both encoders train jointly with the model.

#include <cctype>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "effectlab/dit.hpp"
#include "effectlab/semantic_condition.hpp"

namespace effectlab {

struct Vocab {
    std::vector<std::string> pieces;  // sorted; id = index
    std::unordered_map<std::string, int> index;
    int pad_id = 0;
    int unk_id = 0;

    static std::vector<std::string> tokenize_words(const std::string& text) {
        std::vector<std::string> words;
        std::string cur;
        for (char ch : text) {
            if (std::isalnum(static_cast<unsigned char>(ch))) {
                cur.push_back(char(std::tolower(static_cast<unsigned char>(ch))));
            } else if (!cur.empty()) {
                words.push_back(cur);
                cur.clear();
            }
        }
        if (!cur.empty()) words.push_back(cur);
        return words;
    }

    static Vocab build(const std::vector<std::string>& corpus) {
        std::map<std::string, int> uniq;  // ordered -> sorted ids
        uniq["<pad>"] = 0;
        uniq["<unk>"] = 0;
        for (const auto& line : corpus)
            for (const auto& w : tokenize_words(line)) uniq[w] = 0;
        Vocab v;
        for (const auto& [piece, _] : uniq) {
            v.index[piece] = int(v.pieces.size());
            v.pieces.push_back(piece);
        }
        v.pad_id = v.index.at("<pad>");
        v.unk_id = v.index.at("<unk>");
        return v;
    }

    int size() const { return int(pieces.size()); }

    std::vector<int> encode(const std::string& text, int cap) const {
        std::vector<int> ids;
        for (const auto& w : tokenize_words(text)) {
            if (int(ids.size()) >= cap) break;
            auto it = index.find(w);
            ids.push_back(it == index.end() ? unk_id : it->second);
        }
        if (ids.empty()) ids.push_back(pad_id);
        return ids;
    }

    void save(const std::string& path) const {
        std::ofstream os(path);
        if (!os) throw IoError("cannot open for write: " + path);
        for (const auto& p : pieces) os << p << "\n";
        if (!os) throw IoError("write failed: " + path);
    }

    static Vocab load(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw IoError("cannot open vocab: " + path);
        Vocab v;
        std::string line;
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            v.index[line] = int(v.pieces.size());
            v.pieces.push_back(line);
        }
        auto pad = v.index.find("<pad>");
        auto unk = v.index.find("<unk>");
        if (pad == v.index.end() || unk == v.index.end())
            throw IoError("vocab file missing <pad>/<unk>: " + path);
        v.pad_id = pad->second;
        v.unk_id = unk->second;
        return v;
    }
};

// Patch transformer over the reference video. No positional embedding: the
// strided pooling groups consecutive frame-major tokens, which keeps coarse
// arrangement information, and a zero video maps to exactly zero features.
struct UnderstandingEncoder {
    int patch_h = 2, patch_w = 2;
    int n_out = 16;
    LinearLayer patch_embed;
    struct Block {
        RmsNormLayer norm_attn, norm_ffn;
        StreamProj attn;
        FeedForward ffn;
    };
    std::vector<Block> encoder_blocks;
    RmsNormLayer out_norm;
    AttentionDims dims{};

    static UnderstandingEncoder init(const ModelConfig& cfg, Rng& rng) {
        UnderstandingEncoder e;
        e.patch_h = cfg.patch_h;
        e.patch_w = cfg.patch_w;
        e.n_out = cfg.n_und_tokens;
        const int d = cfg.resolved_cond_width();
        e.dims = AttentionDims{d, cfg.heads, d / cfg.heads};
        if (d % cfg.heads != 0) throw ConfigError("condition width must divide by heads");
        e.patch_embed = LinearLayer::init(cfg.latent_channels * e.patch_h * e.patch_w, d, rng);
        for (int i = 0; i < 2; ++i) {
            Block b;
            b.norm_attn = RmsNormLayer::init(d, cfg.norm_eps);
            b.norm_ffn = RmsNormLayer::init(d, cfg.norm_eps);
            b.attn = StreamProj::init(d, rng);
            b.ffn = FeedForward::init(d, 2, rng);
            e.encoder_blocks.push_back(std::move(b));
        }
        e.out_norm = RmsNormLayer::init(d, cfg.norm_eps);
        return e;
    }

    Tensor forward(const Tensor& ref_video) const {
        if (ref_video.rank() != 4) throw ShapeError("understanding encoder: input must be [C,F,H,W]");
        Tensor x = patch_embed.forward(patchify(ref_video, 1, patch_h, patch_w));
        for (const auto& b : encoder_blocks) {
            x = add(x, plain_self_attention(b.norm_attn.forward(x), b.attn, dims));
            x = add(x, b.ffn.forward(b.norm_ffn.forward(x)));
        }
        return pool_rows(out_norm.forward(x), n_out);
    }

    void register_params(const std::string& prefix, ParamMap& out) {
        patch_embed.register_params(prefix + ".patch_embed", out);
        for (std::size_t i = 0; i < encoder_blocks.size(); ++i) {
            auto& b = encoder_blocks[i];
            const std::string p = prefix + ".block." + std::to_string(i);
            b.norm_attn.register_params(p + ".norm_attn", out);
            b.attn.register_params(p + ".attn", out);
            b.norm_ffn.register_params(p + ".norm_ffn", out);
            b.ffn.register_params(p + ".ffn", out);
        }
        out_norm.register_params(prefix + ".out_norm", out);
    }
};

// 2-layer MLP to the model condition width; token count preserved.
struct Connector {
    LinearLayer fc1, fc2;
    bool use_silu = true;

    static Connector init(int d_in, int d_out, Rng& rng) {
        Connector c;
        c.fc1 = LinearLayer::init(d_in, d_out, rng);
        c.fc2 = LinearLayer::init(d_out, d_out, rng);
        return c;
    }

    Tensor forward(const Tensor& x) const {
        Tensor h = fc1.forward(x);
        if (use_silu) h = silu(h);
        return fc2.forward(h);
    }

    void register_params(const std::string& prefix, ParamMap& out) {
        fc1.register_params(prefix + ".fc1", out);
        fc2.register_params(prefix + ".fc2", out);
    }
};

struct ConditionEncoder {
    Vocab vocab;
    Tensor word_embed;  // [V x d_cond]
    Tensor pos_embed;   // [max_text x d_cond]
    UnderstandingEncoder und;
    Connector connector;  // bridges understanding features into d_cond
    int max_text = 64;
    int d_cond = 0;

    static ConditionEncoder init(const ModelConfig& cfg, const Vocab& vocab, uint64_t seed) {
        Rng rng(mix_seed(seed, 0xc09dULL));
        ConditionEncoder e;
        e.vocab = vocab;
        e.d_cond = cfg.resolved_cond_width();
        e.max_text = cfg.max_text_tokens;
        e.word_embed = Tensor::randn({vocab.size(), e.d_cond}, rng, 0.02f, true);
        e.pos_embed = Tensor::randn({e.max_text, e.d_cond}, rng, 0.02f, true);
        e.und = UnderstandingEncoder::init(cfg, rng);
        e.connector = Connector::init(e.d_cond, e.d_cond, rng);
        return e;
    }

    Tensor encode_reasoning(const std::string& instruction) const {
        const std::vector<int> ids = vocab.encode(instruction, max_text);
        std::vector<int> pos(ids.size());
        for (std::size_t i = 0; i < ids.size(); ++i) pos[i] = int(i);
        return add(embedding(word_embed, ids), embedding(pos_embed, pos));
    }

    Tensor encode_understanding(const Tensor& ref_video) const { return connector.forward(und.forward(ref_video)); }

    SemanticCondition encode(const std::string& instruction, const Tensor& ref_video) const {
        SemanticCondition c;
        c.reasoning = encode_reasoning(instruction);
        c.understanding = encode_understanding(ref_video);
        return c;
    }

    void register_params(ParamMap& out) {
        out.push_back({"cond.word_embed", word_embed});
        out.push_back({"cond.pos_embed", pos_embed});
        und.register_params("cond.und", out);
        connector.register_params("cond.connector", out);
    }
};

// Joint classifier-free-guidance drop: with probability p_drop both streams
// are replaced by zero tokens and flagged.
inline SemanticCondition cfg_drop(const SemanticCondition& cond, float p_drop, Rng& rng) {
    if (p_drop < 0.0f || p_drop > 1.0f) throw ConfigError("p_drop must lie in [0,1]");
    const int d = cond.reasoning.defined() ? cond.reasoning.shape[1] : cond.understanding.shape[1];
    if (p_drop > 0.0f && rng.uniform() < double(p_drop)) return SemanticCondition::dropped(d);
    return cond;
}

}  // namespace effectlab
