#include "psi/flowexpert/train.hpp"

#include <cmath>
#include <string>

#include "psi/common/errors.hpp"
#include "psi/flowexpert/graph.hpp"
#include "psi/flowexpert/pretrain.hpp"

namespace psi::flowexpert {

void TrainConfig::validate() const {
    require(steps >= 1, "training needs at least one step");
    require(batch_size >= 1, "batch size must be positive");
    require(lr > 0.0, "learning rate must be positive");
    require(beta2 > 0.0 && beta2 < 1.0, "beta2 must lie in (0, 1)");
    require(eps > 0.0, "optimizer epsilon must be positive");
}

namespace {

class Optimizer {
  public:
    Optimizer(ExpertParams& params, const TrainConfig& config)
        : params_(params), config_(config) {
        for (const Tensor& t : params.store.tensors) {
            second_moment_.emplace_back(t.value.rows, t.value.cols);
            frozen_.push_back(config.freeze_encoder && t.name.rfind("enc.", 0) == 0);
        }
    }

    void step(double grad_scale) {
        for (size_t i = 0; i < second_moment_.size(); ++i) {
            if (frozen_[i]) {
                continue;
            }
            Tensor& t = params_.store.tensors[i];
            Mat& v = second_moment_[i];
            for (size_t j = 0; j < v.data.size(); ++j) {
                const double g = t.grad.data[j] * grad_scale;
                v.data[j] = config_.beta2 * v.data[j] + (1.0 - config_.beta2) * g * g;
                t.value.data[j] -= config_.lr * g / (std::sqrt(v.data[j]) + config_.eps);
            }
        }
    }

  private:
    ExpertParams& params_;
    const TrainConfig& config_;
    std::vector<Mat> second_moment_;
    std::vector<uint8_t> frozen_;
};

void check_finite(double loss, int step) {
    if (!std::isfinite(loss)) {
        throw ConfigError("training diverged: non-finite loss at step " + std::to_string(step));
    }
}

}  // namespace

double eval_flow_loss(ExpertParams& params, const std::vector<FlowItem>& items, uint64_t seed,
                      int draws_per_item) {
    require(!items.empty(), "no training items");
    require(draws_per_item >= 1, "validation needs at least one draw per item");
    Rng rng(mix_seed(seed, 0x7E));
    double total = 0.0;
    for (const FlowItem& item : items) {
        for (int d = 0; d < draws_per_item; ++d) {
            const double tau = rng.uniform01();
            const FlowSample sample = noise_action(item.chunk, tau, rng);
            Graph g;
            const int v = forward_expert(g, params, item.input, sample.a_tau, tau);
            total += fm_loss(g.value(v), sample);
        }
    }
    return total / (static_cast<double>(items.size()) * draws_per_item);
}

double eval_pretrain_loss(ExpertParams& params, const std::vector<PretrainItem>& items) {
    require(!items.empty(), "no training items");
    double total = 0.0;
    for (const PretrainItem& item : items) {
        total += pretrain_loss_value(params, item.input, item.tokens);
    }
    return total / static_cast<double>(items.size());
}

TrainReport train_flow(ExpertParams& params, const std::vector<FlowItem>& items,
                       const TrainConfig& config) {
    config.validate();
    config.rtc.validate(params.config.horizon);
    require(!items.empty(), "no training items");
    for (const FlowItem& item : items) {
        require(item.chunk.rows == params.config.horizon &&
                    item.chunk.cols == params.config.action_dims,
                "training chunk has wrong shape");
    }

    TrainReport report;
    report.initial_validation = eval_flow_loss(params, items, config.seed);

    Optimizer opt(params, config);
    Rng rng(mix_seed(config.seed, 0x7F));
    const int n = static_cast<int>(items.size());
    for (int step = 0; step < config.steps; ++step) {
        params.store.zero_grads();
        double step_loss = 0.0;
        for (int b = 0; b < config.batch_size; ++b) {
            const FlowItem& item = items[rng.uniform_int(0, n - 1)];
            const double tau = rng.uniform01();
            FlowSample sample = noise_action(item.chunk, tau, rng);
            rtcsched::apply_rtc_mask(sample, rtcsched::sample_delay(config.rtc, rng));

            Graph g;
            const int v = forward_expert(g, params, item.input, sample.a_tau, tau);
            const int loss = g.mean_sq_error_masked(v, g.input(velocity_target(sample)),
                                                    sample.mask);
            g.backward(loss);
            step_loss += g.value(loss).data[0];
        }
        step_loss /= config.batch_size;
        check_finite(step_loss, step);
        report.losses.push_back(step_loss);
        opt.step(1.0 / config.batch_size);
        ++params.step;
    }

    report.final_validation = eval_flow_loss(params, items, config.seed);
    return report;
}

TrainReport train_pretrain(ExpertParams& params, const std::vector<PretrainItem>& items,
                           const TrainConfig& config) {
    config.validate();
    require(!items.empty(), "no training items");

    TrainReport report;
    report.initial_validation = eval_pretrain_loss(params, items);

    Optimizer opt(params, config);
    Rng rng(mix_seed(config.seed, 0x7F));
    const int n = static_cast<int>(items.size());
    for (int step = 0; step < config.steps; ++step) {
        params.store.zero_grads();
        double step_loss = 0.0;
        for (int b = 0; b < config.batch_size; ++b) {
            const PretrainItem& item = items[rng.uniform_int(0, n - 1)];
            Graph g;
            const int loss = pretrain_loss(g, params, item.input, item.tokens);
            g.backward(loss);
            step_loss += g.value(loss).data[0];
        }
        step_loss /= config.batch_size;
        check_finite(step_loss, step);
        report.losses.push_back(step_loss);
        opt.step(1.0 / config.batch_size);
        ++params.step;
    }

    report.final_validation = eval_pretrain_loss(params, items);
    return report;
}

}  // namespace psi::flowexpert
