#pragma once

#include "effectlab/tensor.hpp"

namespace effectlab {

// The two condition streams: instruction-derived reasoning features and
// reference-derived understanding features. A dropped stream is a single
// zero token (never an empty attention input) plus its flag.
struct SemanticCondition {
    Tensor reasoning;      // [n_txt x d_cond]
    Tensor understanding;  // [n_und x d_cond]
    bool drop_reasoning = false;
    bool drop_understanding = false;

    static SemanticCondition dropped(int d_cond) {
        SemanticCondition c;
        c.reasoning = Tensor::zeros({1, d_cond});
        c.understanding = Tensor::zeros({1, d_cond});
        c.drop_reasoning = true;
        c.drop_understanding = true;
        return c;
    }
};

}  // namespace effectlab
