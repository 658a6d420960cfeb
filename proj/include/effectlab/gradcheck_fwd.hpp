#pragma once

#include <string>

namespace effectlab {

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    double tolerance = 1e-3;
    bool pass = false;
};

}  // namespace effectlab
