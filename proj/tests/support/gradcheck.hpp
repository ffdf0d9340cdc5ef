#pragma once

#include "cyclemae/backbone.hpp"
#include "cyclemae/objective.hpp"

#include <cstddef>
#include <string>

namespace cyclemae::testing {

/// Tiny geometry used by the finite-difference checks.
backbone::ModelConfig tiny_config();

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_param;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t checked = 0;
    double reconstruction = 0.0;
    double contrastive = 0.0;
    int triplets = 0;
};

/// Compares tape gradients of L_total against central differences for every
/// scalar parameter. The step's mask and triples are frozen by `trace`.
/// Relative error is |a - f| / max(|a|, |f|, floor); the default floor is the
/// round-off level of a central difference with step 1e-5.
GradCheckResult check_gradients(backbone::Model& model, const tokenizer::PatchGrid& clip,
                                const objective::ObjectiveConfig& cfg,
                                const objective::StepTrace& trace, double step = 1e-5,
                                double floor = 1e-6);

}  // namespace cyclemae::testing
