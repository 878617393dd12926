#pragma once

#include <filesystem>
#include <vector>

namespace psi::fasttok {

struct TokenizerConfig {
    int action_horizon = 1;
    int scale = 100;
    int vocab_size = 2048;
    int dims_per_step = 48;

    int base_symbols() const { return 2 * scale + 1; }
    int flat_dims() const { return action_horizon * dims_per_step; }
    void validate() const;

    bool operator==(const TokenizerConfig&) const = default;
};

struct MergeRule {
    int left = 0;
    int right = 0;
    int result = 0;

    bool operator==(const MergeRule&) const = default;
};

/// A fitted tokenizer: base symbols 0..2*scale, merged symbols appended in
/// learned order. Immutable once fitted; shareable across threads.
struct TokenizerModel {
    TokenizerConfig config;
    std::vector<MergeRule> merges;

    int vocab_count() const { return config.base_symbols() + static_cast<int>(merges.size()); }
    void validate() const;

    bool operator==(const TokenizerModel&) const = default;
};

/// s_i = round_half_away_from_zero(scale * x_i) + scale, so s_i in [0, 2*scale].
/// Inputs must satisfy |x_i| <= 1.
std::vector<int> quantize(const std::vector<double>& x, int scale);

/// x_i = (s_i - scale) / scale. Round-trip error through quantize is at most
/// 0.5 / scale per entry.
std::vector<double> dequantize(const std::vector<int>& symbols, int scale);

/// Orthonormal type-II DCT along the step axis, independently per dimension.
/// Layout is [step][dim], horizon rows of dims values. At horizon 1 both maps
/// are the identity; above that the caller owns keeping coefficients inside
/// the quantizer's input range.
std::vector<double> dct_forward(const std::vector<double>& x, int horizon, int dims);
std::vector<double> dct_inverse(const std::vector<double>& X, int horizon, int dims);

/// Greedy byte-pair encoding over base-symbol sequences: repeatedly merge the
/// globally most frequent adjacent pair (ties to the lexicographically
/// smallest pair) until vocab_size is reached or no pair occurs twice.
TokenizerModel fit_bpe(const std::vector<std::vector<int>>& corpus, const TokenizerConfig& config);

/// Applies the learned merges in order to a base-symbol sequence.
std::vector<int> apply_merges(const TokenizerModel& model, std::vector<int> symbols);

/// Expands every token back to base symbols.
std::vector<int> expand_tokens(const TokenizerModel& model, const std::vector<int>& tokens);

/// DCT, quantize, merge. x must hold action_horizon * dims_per_step values.
std::vector<int> encode(const TokenizerModel& model, const std::vector<double>& x);

/// Exact inverse of encode at the symbol level; values are recovered to
/// within the quantization bound.
std::vector<double> decode(const TokenizerModel& model, const std::vector<int>& tokens);

struct ReconstructionReport {
    double mean_l1 = 0.0;
    double max_abs_error = 0.0;
    double mean_token_length = 0.0;
};

ReconstructionReport reconstruction_report(const TokenizerModel& model,
                                           const std::vector<std::vector<double>>& corpus);

/// JSON checkpoint: format version, config, merge rules as integer triples.
void save_tokenizer(const std::filesystem::path& path, const TokenizerModel& model);
TokenizerModel load_tokenizer(const std::filesystem::path& path);

}  // namespace psi::fasttok
