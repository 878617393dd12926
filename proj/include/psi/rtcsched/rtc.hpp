#pragma once

#include "psi/common/rng.hpp"
#include "psi/flowexpert/flow.hpp"

namespace psi::rtcsched {

// Training-time real-time chunking. When the deployed controller starts
// generating a new chunk, the first few steps of the old chunk are already
// committed for execution, so training simulates that: a delay d is drawn
// uniformly, the first d rows of the noisy chunk are replaced with the clean
// actions, and those rows are dropped from the loss. The model learns to
// inpaint a chunk around a frozen prefix.
struct RtcTrainRule {
    int d_max = 6;
    bool include_zero_delay = true;
    // Execution horizon of the deployed controller, if known. Delays of
    // H - exec_horizon or more are legal for training but would overrun at
    // deployment, so validate() flags them on stderr. 0 disables the check.
    int exec_horizon = 0;

    void validate(int horizon) const;
};

// Uniform over {0 .. d_max}, or {1 .. d_max} when zero delays are excluded.
int sample_delay(const RtcTrainRule& rule, Rng& rng);

// Pins rows [0, delay) of a_tau to the clean actions and masks them out of
// the loss. At least one row must stay live.
void apply_rtc_mask(flowexpert::FlowSample& sample, int delay);

}  // namespace psi::rtcsched
