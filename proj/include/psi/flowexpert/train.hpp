#pragma once

#include <cstdint>
#include <vector>

#include "psi/flowexpert/flow.hpp"
#include "psi/flowexpert/params.hpp"
#include "psi/rtcsched/rtc.hpp"

namespace psi::flowexpert {

struct TrainConfig {
    int steps = 500;
    int batch_size = 8;
    double lr = 1e-3;
    uint64_t seed = 0;
    double beta2 = 0.999;
    double eps = 1e-8;
    bool freeze_encoder = false;
    rtcsched::RtcTrainRule rtc;

    void validate() const;
};

// One flow-matching training example: the conditioning observation and the
// clean normalized action chunk it should produce.
struct FlowItem {
    ExpertInput input;
    Mat chunk;
};

struct PretrainItem {
    ExpertInput input;
    std::vector<int> tokens;
};

struct TrainReport {
    std::vector<double> losses;
    double initial_validation = 0.0;
    double final_validation = 0.0;
};

// Mean flow-matching loss over fixed seeded noise draws, full chunk, no
// delay masking. Used for the before/after comparison in the reports.
double eval_flow_loss(ExpertParams& params, const std::vector<FlowItem>& items, uint64_t seed,
                      int draws_per_item = 4);

double eval_pretrain_loss(ExpertParams& params, const std::vector<PretrainItem>& items);

// Single-threaded minibatch training with a second-moment adaptive update:
//   v <- beta2 v + (1 - beta2) g^2,  p <- p - lr g / (sqrt(v) + eps)
// Each flow sample draws tau, fresh noise, and a chunking delay; the first
// delay rows are pinned to the clean actions and masked from the loss.
// A non-finite loss aborts with a diagnostic rather than training on.
TrainReport train_flow(ExpertParams& params, const std::vector<FlowItem>& items,
                       const TrainConfig& config);

TrainReport train_pretrain(ExpertParams& params, const std::vector<PretrainItem>& items,
                           const TrainConfig& config);

}  // namespace psi::flowexpert
