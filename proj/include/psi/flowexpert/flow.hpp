#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "psi/common/rng.hpp"
#include "psi/flowexpert/expert.hpp"
#include "psi/flowexpert/mat.hpp"

namespace psi::flowexpert {

// One flow-matching training sample. The interpolant is
//   a_tau = tau * a + (1 - tau) * eps
// and the regression target for the velocity field is eps - a. The mask
// selects which chunk rows participate in the loss (1 = included).
struct FlowSample {
    Mat a;
    Mat eps;
    Mat a_tau;
    double tau = 0.0;
    std::vector<uint8_t> mask;
};

FlowSample noise_action(const Mat& a, double tau, Rng& rng);

Mat velocity_target(const FlowSample& sample);

// Mean squared error between the prediction and eps - a over the unmasked
// rows, averaged over unmasked entries.
double fm_loss(const Mat& pred, const FlowSample& sample);

using VelocityField = std::function<Mat(const Mat& a_tau, double tau)>;

// Euler integration of the learned field from pure noise at tau = 0 to an
// action chunk at tau = 1, with step size 1/steps:
//   a <- a - (1/steps) * field(a, tau)
// If prefix has rows, those rows are overwritten into the state before every
// field evaluation and into the result, so committed actions pass through
// bit for bit while the rest of the chunk is generated around them.
Mat integrate_flow(const VelocityField& field, const Mat& eps, int steps, const Mat& prefix);

// Runs the expert as the velocity field. eps is the starting noise,
// horizon x action_dims.
Mat sample_actions(ExpertParams& params, const ExpertInput& input, const Mat& eps, int steps,
                   const Mat& prefix);

}  // namespace psi::flowexpert
