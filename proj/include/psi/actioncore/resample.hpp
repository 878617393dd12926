#pragma once

#include <string>

#include "psi/actioncore/types.hpp"

namespace psi::actioncore {

/// Positive rational resampling factor. factor > 1 upsamples, < 1 downsamples.
struct Rational {
    long long num = 1;
    long long den = 1;

    void validate() const;
    double value() const { return static_cast<double>(num) / static_cast<double>(den); }
    Rational inverse() const { return {den, num}; }

    /// Parses "3", "1/3", "30/10".
    static Rational parse(const std::string& text);
};

/// Resamples every channel (actions, states, contexts) by linear
/// interpolation on the refined/coarsened time grid. Output frame j sits at
/// original position j * den / num; positions landing on an input frame copy
/// it bit-exactly, so first/last frames and shared grid points are preserved.
/// 6D rotation blocks are interpolated component-wise like any other channel
/// and re-orthonormalized by the consumer. frame_rate scales by the factor.
Episode resample_episode(const Episode& ep, const Rational& factor);

}  // namespace psi::actioncore
