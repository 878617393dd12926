#pragma once

#include <vector>

#include "psi/flowexpert/expert.hpp"
#include "psi/flowexpert/graph.hpp"
#include "psi/flowexpert/params.hpp"

namespace psi::flowexpert {

// Next-token loss for the autoregressive pretraining head. The encoded
// context tokens form a prefix (projected into the head width), the action
// tokens follow as embeddings, and a causal transformer predicts each action
// token from everything before it: the logits at positions K-1 .. K+N-2
// are scored against tokens 0 .. N-1 with mean cross entropy.
//
// Both output heads start at zero, so before any training the logits are
// uniform and the loss equals ln(vocab_size).
int pretrain_loss(Graph& g, ExpertParams& params, const ExpertInput& input,
                  const std::vector<int>& tokens);

// Forward-only convenience wrapper.
double pretrain_loss_value(ExpertParams& params, const ExpertInput& input,
                           const std::vector<int>& tokens);

}  // namespace psi::flowexpert
