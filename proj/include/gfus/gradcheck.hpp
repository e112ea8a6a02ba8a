#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gfus/model.hpp"

namespace gfus {

struct GradCheckRow {
    std::string name;
    double max_rel_err = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckRow> rows;
    double worst = 0.0;
    bool passed(double threshold) const { return worst < threshold; }
};

/// The small configuration every full-model gradient check runs on.
ModelConfig gradcheck_config();

/// Central-difference check of d(loss)/d(theta) for every parameter tensor
/// on one random pair, eval mode. corrupt_one deliberately perturbs a single
/// analytic gradient (negative control).
GradCheckReport model_gradient_check(const ModelConfig& config, std::uint64_t seed,
                                     double step = 1e-6, bool corrupt_one = false);

} // namespace gfus
