#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "psi/flowexpert/mat.hpp"

namespace psi::flowexpert {

enum class Variant : uint8_t {
    mmdit = 0,      // dual-stream modulation: VL and A streams each get
                    // tau-conditioned shift/scale/gate
    naive_dit = 1,  // A-stream modulation only; VL stream runs plain
                    // pre-norm blocks with ungated residuals
};

const char* variant_name(Variant v);
Variant variant_from_name(const std::string& name);

struct ExpertConfig {
    Variant variant = Variant::mmdit;
    int width = 64;          // shared token width D
    int blocks = 4;
    int heads = 4;
    int vl_tokens = 8;       // K context tokens
    int horizon = 16;        // H action steps
    int action_dims = 36;
    int context_dim = 32;
    int proprio_dim = 32;
    int task_count = 4;
    int encoder_hidden = 32;
    int mlp_hidden = 256;    // block MLP hidden width for the mmdit variant
    int tau_features = 8;    // sinusoidal features fed to the tau embedding

    // Next-token pretraining head.
    int vocab_size = 2048;
    int pretrain_width = 64;
    int pretrain_blocks = 2;
    int pretrain_heads = 4;
    int max_tokens = 64;     // positions reserved for prefix + action tokens

    void validate() const;

    bool operator==(const ExpertConfig&) const = default;
};

/// Extra MLP hidden width that puts the naive variant's parameter count
/// closest to the mmdit count at the same config (the naive variant drops the
/// per-block VL modulation head and buys MLP width back with the difference).
int matched_naive_mlp_hidden(const ExpertConfig& config);

struct Tensor {
    std::string name;
    Mat value;
    Mat grad;
};

/// Ordered named parameter tensors. Creation order is fixed by the
/// constructor and defines the checkpoint blob layout.
struct ParamStore {
    std::vector<Tensor> tensors;
    std::unordered_map<std::string, size_t> index;

    Tensor& add(const std::string& name, int rows, int cols);
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;
    bool has(const std::string& name) const { return index.count(name) > 0; }

    size_t total_params() const;
    void zero_grads();
};

struct ExpertParams {
    ExpertConfig config;
    ParamStore store;
    uint64_t init_seed = 0;
    int64_t step = 0;  // training steps applied so far, for checkpoints
};

/// Builds all tensors and applies the documented init: scaled-normal weights,
/// zero biases, zero modulation heads and zero output head (identity residual
/// blocks, exactly zero velocity output at init).
ExpertParams init_params(const ExpertConfig& config, uint64_t seed);

/// Overwrites every tensor with small normal values (including the heads that
/// init_params zeroes). Used by gradient checks, which need gradients flowing
/// through every path.
void randomize_params(ExpertParams& params, uint64_t seed, double stdev = 0.2);

/// Tiny configuration (<= 10^4 parameters) for finite-difference checks.
ExpertConfig mini_config(Variant variant);

}  // namespace psi::flowexpert
