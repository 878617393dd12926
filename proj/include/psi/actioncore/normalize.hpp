#pragma once

#include <set>
#include <vector>

#include "psi/common/errors.hpp"

namespace psi::actioncore {

/// Per-dimension 1st/99th-quantile statistics. A dimension where the two
/// quantiles coincide is flagged degenerate and can only be normalized when
/// declared as a pad dimension.
struct NormStats {
    std::vector<double> q01;
    std::vector<double> q99;
    std::vector<uint8_t> degenerate;

    int dims() const { return static_cast<int>(q01.size()); }
    void validate() const;
};

/// Linear-interpolation quantile ("linear" method on sorted data): the value
/// at fractional order-statistic position p * (n - 1).
double linear_quantile(std::vector<double> sorted_or_not, double p);

/// Fits q01/q99 per dimension. Every dimension needs at least 2 finite
/// samples. The result is independent of sample ordering.
NormStats fit_quantile_stats(const std::vector<std::vector<double>>& per_dim_samples);

/// Affine map [q01, q99] -> [-1, 1], clipped outside. Degenerate dimensions
/// are an error unless listed in pad_dims, in which case they map to 0.
std::vector<double> normalize(const std::vector<double>& x, const NormStats& stats,
                              const std::set<int>& pad_dims = {});

/// Exact inverse of normalize on the unclipped range; pad (degenerate)
/// dimensions return their constant value.
std::vector<double> denormalize(const std::vector<double>& y, const NormStats& stats,
                                const std::set<int>& pad_dims = {});

/// All degenerate dimensions of the fitted stats; the pipeline declares this
/// set as its pad set.
std::set<int> degenerate_dims(const NormStats& stats);

}  // namespace psi::actioncore
