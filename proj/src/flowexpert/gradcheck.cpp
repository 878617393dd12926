#include "psi/flowexpert/gradcheck.hpp"

#include <cmath>
#include <vector>

#include "psi/common/errors.hpp"

namespace psi::flowexpert {

namespace {

double loss_value(ExpertParams& params, const LossBuilder& build_loss) {
    Graph g;
    const int loss = build_loss(g, params);
    const Mat& v = g.value(loss);
    require_internal(v.rows == 1 && v.cols == 1, "gradient check needs a scalar loss");
    return v.data[0];
}

}  // namespace

GradCheckReport check_gradients(ExpertParams& params, const LossBuilder& build_loss, double step,
                                double floor) {
    params.store.zero_grads();
    {
        Graph g;
        const int loss = build_loss(g, params);
        g.backward(loss);
    }
    std::vector<Mat> analytic;
    analytic.reserve(params.store.tensors.size());
    for (const Tensor& t : params.store.tensors) {
        analytic.push_back(t.grad);
    }

    GradCheckReport report;
    for (size_t i = 0; i < params.store.tensors.size(); ++i) {
        Tensor& t = params.store.tensors[i];
        for (size_t j = 0; j < t.value.data.size(); ++j) {
            const double saved = t.value.data[j];
            t.value.data[j] = saved + step;
            const double up = loss_value(params, build_loss);
            t.value.data[j] = saved - step;
            const double down = loss_value(params, build_loss);
            t.value.data[j] = saved;

            const double fd = (up - down) / (2.0 * step);
            const double g = analytic[i].data[j];
            const double rel = std::abs(g - fd) / std::max({std::abs(g), std::abs(fd), floor});
            ++report.entries_checked;
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_tensor = t.name;
            }
        }
    }
    return report;
}

}  // namespace psi::flowexpert
