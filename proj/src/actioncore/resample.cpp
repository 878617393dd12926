#include "psi/actioncore/resample.hpp"

#include <numeric>

namespace psi::actioncore {

void Rational::validate() const {
    require(num > 0 && den > 0, "resample factor must be a positive rational");
}

Rational Rational::parse(const std::string& text) {
    const auto slash = text.find('/');
    try {
        if (slash == std::string::npos) {
            return {std::stoll(text), 1};
        }
        return {std::stoll(text.substr(0, slash)), std::stoll(text.substr(slash + 1))};
    } catch (const std::exception&) {
        throw ConfigError("cannot parse resample factor: " + text);
    }
}

namespace {

std::vector<std::vector<float>> resample_rows(const std::vector<std::vector<float>>& rows,
                                              long long num, long long den,
                                              long long out_frames) {
    std::vector<std::vector<float>> out;
    out.reserve(static_cast<size_t>(out_frames));
    const auto n_in = static_cast<long long>(rows.size());
    for (long long j = 0; j < out_frames; ++j) {
        const long long pos_num = j * den;  // position in input frames = pos_num / num
        const long long lo = pos_num / num;
        const long long rem = pos_num % num;
        if (rem == 0) {
            out.push_back(rows[static_cast<size_t>(lo)]);  // exact grid hit, bit-exact copy
            continue;
        }
        const long long hi = std::min(lo + 1, n_in - 1);
        const double frac = static_cast<double>(rem) / static_cast<double>(num);
        const auto& a = rows[static_cast<size_t>(lo)];
        const auto& b = rows[static_cast<size_t>(hi)];
        std::vector<float> row(a.size());
        for (size_t c = 0; c < a.size(); ++c) {
            const double va = static_cast<double>(a[c]);
            const double vb = static_cast<double>(b[c]);
            row[c] = static_cast<float>(va + frac * (vb - va));
        }
        out.push_back(std::move(row));
    }
    return out;
}

}  // namespace

Episode resample_episode(const Episode& ep, const Rational& factor) {
    factor.validate();
    ep.validate();
    const long long g = std::gcd(factor.num, factor.den);
    const long long num = factor.num / g;
    const long long den = factor.den / g;

    if (num == den) {
        return ep;
    }

    const auto n_in = static_cast<long long>(ep.frames());
    // Output frame j lies at input position j*den/num; keep every j that maps
    // inside the input range.
    const long long out_frames = (n_in - 1) * num / den + 1;
    require(out_frames >= 1, "resample factor yields no output frames");

    Episode out = ep;
    out.frame_rate = ep.frame_rate * static_cast<double>(num) / static_cast<double>(den);
    out.actions = resample_rows(ep.actions, num, den, out_frames);
    out.states = resample_rows(ep.states, num, den, out_frames);
    out.contexts = resample_rows(ep.contexts, num, den, out_frames);
    out.validate();
    return out;
}

}  // namespace psi::actioncore
