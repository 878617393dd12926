#pragma once

#include <vector>

#include "psi/flowexpert/graph.hpp"
#include "psi/flowexpert/params.hpp"

namespace psi::flowexpert {

// One conditioning input for the action expert: a task id plus the flat
// context and proprioception vectors from the observation.
struct ExpertInput {
    int task_id = 0;
    std::vector<double> context;
    std::vector<double> proprio;
};

// Sinusoidal features for the flow time: [sin(pi t 2^k), cos(pi t 2^k)]
// for k = 0 .. features/2 - 1, as a 1 x features row.
Mat tau_feature_row(double tau, int features);

// Builds the VL token stream: row 0 is the task embedding, rows 1..K-1 come
// from a two-layer tanh encoder over [context ; proprio], and the learned
// positional row is added to every token. Returns a K x width node.
int encode_context(Graph& g, ExpertParams& params, const ExpertInput& input);

// Builds the tau conditioning vector (1 x width) from the sinusoidal
// features through a silu MLP.
int tau_embedding(Graph& g, ExpertParams& params, double tau);

// Builds the full velocity prediction for one sample. a_tau is the noisy
// action chunk, horizon x action_dims. Returns the velocity node with the
// same shape. Both variants share the joint attention over [VL ; A]; they
// differ only in how the VL stream is conditioned:
//   mmdit      both streams get tau modulation with gated residuals
//   naive_dit  the VL stream runs plain pre-LN with ungated residuals,
//              with both MLPs widened to keep the parameter count matched
int forward_expert(Graph& g, ExpertParams& params, const ExpertInput& input,
                   const Mat& a_tau, double tau);

}  // namespace psi::flowexpert
