#include "psi/actioncore/normalize.hpp"

#include <algorithm>
#include <cmath>

namespace psi::actioncore {

void NormStats::validate() const {
    require_data(q01.size() == q99.size() && q01.size() == degenerate.size(),
                 "norm stats field lengths differ");
    for (size_t i = 0; i < q01.size(); ++i) {
        require_data(std::isfinite(q01[i]) && std::isfinite(q99[i]), "norm stats non-finite");
        require_data(q01[i] <= q99[i], "norm stats q01 > q99");
        require_data((q01[i] == q99[i]) == (degenerate[i] != 0),
                     "norm stats degenerate flag inconsistent");
    }
}

double linear_quantile(std::vector<double> samples, double p) {
    require(!samples.empty(), "quantile of empty sample set");
    std::sort(samples.begin(), samples.end());
    const double pos = p * static_cast<double>(samples.size() - 1);
    const auto lo = static_cast<size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, samples.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return samples[lo] + frac * (samples[hi] - samples[lo]);
}

NormStats fit_quantile_stats(const std::vector<std::vector<double>>& per_dim_samples) {
    NormStats stats;
    stats.q01.reserve(per_dim_samples.size());
    for (const auto& dim : per_dim_samples) {
        require_data(dim.size() >= 2, "insufficient samples");
        for (double v : dim) {
            require_data(std::isfinite(v), "non-finite sample");
        }
        const double lo = linear_quantile(dim, 0.01);
        const double hi = linear_quantile(dim, 0.99);
        stats.q01.push_back(lo);
        stats.q99.push_back(hi);
        stats.degenerate.push_back(lo == hi ? 1 : 0);
    }
    return stats;
}

std::vector<double> normalize(const std::vector<double>& x, const NormStats& stats,
                              const std::set<int>& pad_dims) {
    require_data(x.size() == stats.q01.size(), "normalize dimension mismatch");
    std::vector<double> y(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        if (stats.degenerate[i]) {
            require_data(pad_dims.count(static_cast<int>(i)) > 0,
                         "degenerate dimension outside declared pad set");
            y[i] = 0.0;
            continue;
        }
        const double t = 2.0 * (x[i] - stats.q01[i]) / (stats.q99[i] - stats.q01[i]) - 1.0;
        y[i] = std::clamp(t, -1.0, 1.0);
    }
    return y;
}

std::vector<double> denormalize(const std::vector<double>& y, const NormStats& stats,
                                const std::set<int>& pad_dims) {
    require_data(y.size() == stats.q01.size(), "denormalize dimension mismatch");
    std::vector<double> x(y.size());
    for (size_t i = 0; i < y.size(); ++i) {
        if (stats.degenerate[i]) {
            require_data(pad_dims.count(static_cast<int>(i)) > 0,
                         "degenerate dimension outside declared pad set");
            x[i] = stats.q01[i];
            continue;
        }
        x[i] = (y[i] + 1.0) * 0.5 * (stats.q99[i] - stats.q01[i]) + stats.q01[i];
    }
    return x;
}

std::set<int> degenerate_dims(const NormStats& stats) {
    std::set<int> dims;
    for (size_t i = 0; i < stats.degenerate.size(); ++i) {
        if (stats.degenerate[i]) {
            dims.insert(static_cast<int>(i));
        }
    }
    return dims;
}

}  // namespace psi::actioncore
