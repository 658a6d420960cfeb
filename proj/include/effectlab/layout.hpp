#pragma once

// Token layout for the concatenated reference+target sequence: per-token
// grid coordinates, stream tag, and the clean flag driving timestep
// embedding, noising, and sampler anchoring.

#include <vector>

#include "effectlab/config.hpp"
#include "effectlab/tensor.hpp"

namespace effectlab {

enum class Stream : uint8_t { reference, target };

struct TokenInfo {
    Stream stream;
    bool clean;
    int frame, row, col;  // token-grid coordinates within the stream
};

struct GridShape {
    int frames = 0, rows = 0, cols = 0;
    int tokens() const { return frames * rows * cols; }
};

struct TokenLayout {
    std::vector<TokenInfo> tokens;  // reference block first, then target block
    int n_ref = 0;
    int n_tgt = 0;
    GridShape ref_grid, tgt_grid;
    int patch_t = 1, patch_h = 1, patch_w = 1;

    int total() const { return n_ref + n_tgt; }
    const TokenInfo& at(int i) const { return tokens[std::size_t(i)]; }
};

namespace detail {
inline GridShape token_grid(const Shape& latent, int pt, int ph, int pw) {
    if (latent.size() != 4) throw ShapeError("latent must be [C,F,H,W], got " + shape_str(latent));
    const int f = latent[1], h = latent[2], w = latent[3];
    if (f % pt || h % ph || w % pw)
        throw ShapeError("latent extents " + shape_str(latent) + " not divisible by patch " + std::to_string(pt) +
                         "x" + std::to_string(ph) + "x" + std::to_string(pw));
    return GridShape{f / pt, h / ph, w / pw};
}
}  // namespace detail

// Reference tokens precede target tokens; reference tokens and the target's
// first-frame tokens are clean. Token order is frame-major, then row, then col.
inline TokenLayout build_layout(const Shape& ref_latent, const Shape& tgt_latent, const ModelConfig& cfg) {
    TokenLayout lay;
    lay.patch_t = cfg.patch_t;
    lay.patch_h = cfg.patch_h;
    lay.patch_w = cfg.patch_w;
    lay.ref_grid = detail::token_grid(ref_latent, cfg.patch_t, cfg.patch_h, cfg.patch_w);
    lay.tgt_grid = detail::token_grid(tgt_latent, cfg.patch_t, cfg.patch_h, cfg.patch_w);
    lay.n_ref = lay.ref_grid.tokens();
    lay.n_tgt = lay.tgt_grid.tokens();
    lay.tokens.reserve(std::size_t(lay.n_ref + lay.n_tgt));
    for (int f = 0; f < lay.ref_grid.frames; ++f)
        for (int r = 0; r < lay.ref_grid.rows; ++r)
            for (int c = 0; c < lay.ref_grid.cols; ++c)
                lay.tokens.push_back(TokenInfo{Stream::reference, true, f, r, c});
    for (int f = 0; f < lay.tgt_grid.frames; ++f)
        for (int r = 0; r < lay.tgt_grid.rows; ++r)
            for (int c = 0; c < lay.tgt_grid.cols; ++c) {
                const bool clean = (f == 0 && cfg.patch_t == 1);
                lay.tokens.push_back(TokenInfo{Stream::target, clean, f, r, c});
            }
    return lay;
}

}  // namespace effectlab
