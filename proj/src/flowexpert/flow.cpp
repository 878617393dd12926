#include "psi/flowexpert/flow.hpp"

#include <algorithm>

#include "psi/common/errors.hpp"
#include "psi/flowexpert/graph.hpp"

namespace psi::flowexpert {

FlowSample noise_action(const Mat& a, double tau, Rng& rng) {
    require(tau >= 0.0 && tau <= 1.0, "flow time outside [0, 1]");
    FlowSample s;
    s.a = a;
    s.tau = tau;
    s.eps = Mat(a.rows, a.cols);
    s.a_tau = Mat(a.rows, a.cols);
    for (size_t i = 0; i < a.data.size(); ++i) {
        s.eps.data[i] = rng.normal();
        s.a_tau.data[i] = tau * a.data[i] + (1.0 - tau) * s.eps.data[i];
    }
    s.mask.assign(a.rows, 1);
    return s;
}

Mat velocity_target(const FlowSample& sample) {
    Mat t(sample.a.rows, sample.a.cols);
    for (size_t i = 0; i < t.data.size(); ++i) {
        t.data[i] = sample.eps.data[i] - sample.a.data[i];
    }
    return t;
}

double fm_loss(const Mat& pred, const FlowSample& sample) {
    require_internal(pred.same_shape(sample.a), "velocity prediction has wrong shape");
    require_internal(sample.mask.size() == static_cast<size_t>(pred.rows),
                     "loss mask has wrong length");
    double sum = 0.0;
    int live_rows = 0;
    for (int r = 0; r < pred.rows; ++r) {
        if (!sample.mask[r]) {
            continue;
        }
        ++live_rows;
        for (int c = 0; c < pred.cols; ++c) {
            const double d = pred.at(r, c) - (sample.eps.at(r, c) - sample.a.at(r, c));
            sum += d * d;
        }
    }
    require(live_rows > 0, "empty loss support");
    return sum / (static_cast<double>(live_rows) * pred.cols);
}

Mat integrate_flow(const VelocityField& field, const Mat& eps, int steps, const Mat& prefix) {
    require(steps >= 1, "flow integration needs at least one step");
    require(prefix.rows <= eps.rows, "committed prefix longer than the chunk");
    require(prefix.rows == 0 || prefix.cols == eps.cols,
            "committed prefix has wrong column count");

    const auto pin_prefix = [&](Mat& a) {
        for (int r = 0; r < prefix.rows; ++r) {
            for (int c = 0; c < prefix.cols; ++c) {
                a.at(r, c) = prefix.at(r, c);
            }
        }
    };

    Mat a = eps;
    const double delta = 1.0 / steps;
    for (int i = 0; i < steps; ++i) {
        pin_prefix(a);
        const Mat v = field(a, i * delta);
        require_internal(v.same_shape(a), "velocity field returned wrong shape");
        for (size_t j = 0; j < a.data.size(); ++j) {
            a.data[j] -= delta * v.data[j];
        }
    }
    pin_prefix(a);
    return a;
}

Mat sample_actions(ExpertParams& params, const ExpertInput& input, const Mat& eps, int steps,
                   const Mat& prefix) {
    const VelocityField field = [&](const Mat& a_tau, double tau) {
        Graph g;
        const int v = forward_expert(g, params, input, a_tau, tau);
        return g.value(v);
    };
    return integrate_flow(field, eps, steps, prefix);
}

}  // namespace psi::flowexpert
