#include "psi/rtcsched/rtc.hpp"

#include <iostream>

#include "psi/common/errors.hpp"

namespace psi::rtcsched {

void RtcTrainRule::validate(int horizon) const {
    require(d_max >= 0, "rtc d_max must be non-negative");
    require(d_max < horizon, "rtc d_max must leave at least one live chunk row");
    require(include_zero_delay || d_max >= 1,
            "rtc delay range is empty with zero delays excluded");
    if (exec_horizon > 0 && d_max >= horizon - exec_horizon) {
        std::cerr << "note: rtc d_max " << d_max << " reaches into the execution horizon; "
                  << "delays beyond " << horizon - exec_horizon - 1
                  << " would overrun at deployment\n";
    }
}

int sample_delay(const RtcTrainRule& rule, Rng& rng) {
    const int lo = rule.include_zero_delay ? 0 : 1;
    require_internal(rule.d_max >= lo, "rtc delay range is empty");
    return rng.uniform_int(lo, rule.d_max);
}

void apply_rtc_mask(flowexpert::FlowSample& sample, int delay) {
    const int rows = sample.a.rows;
    require(delay >= 0 && delay < rows, "rtc delay must leave at least one live chunk row");
    for (int r = 0; r < delay; ++r) {
        for (int c = 0; c < sample.a.cols; ++c) {
            sample.a_tau.at(r, c) = sample.a.at(r, c);
        }
        sample.mask[r] = 0;
    }
}

}  // namespace psi::rtcsched
