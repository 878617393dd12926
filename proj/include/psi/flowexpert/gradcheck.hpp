#pragma once

#include <functional>
#include <string>

#include "psi/flowexpert/graph.hpp"
#include "psi/flowexpert/params.hpp"

namespace psi::flowexpert {

// Builds a scalar loss node for the current parameter values. Must be
// deterministic: any noise, tau draws, or masks have to be captured by
// value so that repeated calls see identical inputs.
using LossBuilder = std::function<int(Graph&, ExpertParams&)>;

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_tensor;
    size_t entries_checked = 0;
};

// Central finite differences over every parameter entry:
//   fd = (L(p + h) - L(p - h)) / (2h)
// compared against the analytic gradient with relative error
//   |g - fd| / max(|g|, |fd|, floor)
GradCheckReport check_gradients(ExpertParams& params, const LossBuilder& build_loss,
                                double step = 1e-4, double floor = 1e-8);

}  // namespace psi::flowexpert
