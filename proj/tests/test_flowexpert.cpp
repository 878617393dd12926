#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "psi/common/errors.hpp"
#include "psi/common/rng.hpp"
#include "psi/flowexpert/checkpoint.hpp"
#include "psi/flowexpert/expert.hpp"
#include "psi/flowexpert/flow.hpp"
#include "psi/flowexpert/gradcheck.hpp"
#include "psi/flowexpert/graph.hpp"
#include "psi/flowexpert/params.hpp"
#include "psi/flowexpert/pretrain.hpp"
#include "psi/flowexpert/train.hpp"
#include "psi/rtcsched/rtc.hpp"

namespace fs = std::filesystem;
using namespace psi;
using namespace psi::flowexpert;

namespace {

Mat random_mat(int rows, int cols, Rng& rng, double stdev = 0.5) {
    Mat m(rows, cols);
    for (double& v : m.data) {
        v = rng.normal(0.0, stdev);
    }
    return m;
}

double max_abs_diff(const Mat& a, const Mat& b) {
    REQUIRE(a.same_shape(b));
    double worst = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
    }
    return worst;
}

// Finite-difference harness for raw graphs: the builder creates param nodes
// pointing at the entries of ps, and the returned scalar is checked against
// central differences entry by entry.
struct FdParam {
    Mat value;
    Mat grad;
    FdParam(int rows, int cols, Rng& rng, double stdev = 0.5)
        : value(random_mat(rows, cols, rng, stdev)), grad(rows, cols) {}
};

double fd_worst_rel_error(const std::function<int(Graph&)>& build,
                          const std::vector<FdParam*>& ps, double h) {
    for (FdParam* p : ps) {
        std::fill(p->grad.data.begin(), p->grad.data.end(), 0.0);
    }
    {
        Graph g;
        g.backward(build(g));
    }
    const auto value = [&]() {
        Graph g;
        return g.value(build(g)).data[0];
    };
    double worst = 0.0;
    for (FdParam* p : ps) {
        const Mat analytic = p->grad;
        for (size_t j = 0; j < p->value.data.size(); ++j) {
            const double saved = p->value.data[j];
            p->value.data[j] = saved + h;
            const double up = value();
            p->value.data[j] = saved - h;
            const double down = value();
            p->value.data[j] = saved;
            const double fd = (up - down) / (2.0 * h);
            const double g = analytic.data[j];
            worst = std::max(worst,
                             std::abs(g - fd) / std::max({std::abs(g), std::abs(fd), 1e-8}));
        }
    }
    return worst;
}

ExpertInput make_input(const ExpertConfig& cfg, int task_id, uint64_t seed) {
    Rng rng(mix_seed(seed, 0x1A));
    ExpertInput in;
    in.task_id = task_id;
    for (int i = 0; i < cfg.context_dim; ++i) {
        in.context.push_back(rng.uniform(-1.0, 1.0));
    }
    for (int i = 0; i < cfg.proprio_dim; ++i) {
        in.proprio.push_back(rng.uniform(-1.0, 1.0));
    }
    return in;
}

Mat make_chunk(const ExpertConfig& cfg, int variant_shift) {
    Mat chunk(cfg.horizon, cfg.action_dims);
    for (int r = 0; r < chunk.rows; ++r) {
        for (int c = 0; c < chunk.cols; ++c) {
            chunk.at(r, c) = 0.4 * std::sin(0.3 * (c + 1) * (r + 1) + variant_shift);
        }
    }
    return chunk;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& content) {
    std::ofstream os(p, std::ios::binary);
    os << content;
}

}  // namespace

TEST_CASE("autograd matches central differences on a linear graph") {
    Rng rng(11);
    FdParam p1(3, 4, rng), p2(4, 5, rng), p3(1, 6, rng);
    const Mat c = random_mat(3, 3, rng);
    const Mat target = random_mat(3, 6, rng);

    const auto build = [&](Graph& g) {
        const int a = g.param(&p1.value, &p1.grad);
        const int b = g.param(&p2.value, &p2.grad);
        const int m = g.matmul(a, b);
        const int t = g.transpose(m);
        const int s1 = g.slice_rows(t, 1, 4);
        const int s2 = g.slice_cols(m, 0, 3);
        const int d = g.scale(g.sub(g.add(s1, s2), g.input(c)), 1.7);
        const int cr = g.concat_rows(d, s1);
        const int gt = g.gather_rows(cr, {0, 5, 2, 2});
        const int rs = g.reshape(gt, 3, 4);
        const int cc = g.concat_cols({rs, g.slice_cols(d, 0, 2)});
        const int ar = g.add_row(cc, g.param(&p3.value, &p3.grad));
        return g.mean_sq_error_masked(ar, g.input(target), {1, 0, 1});
    };
    CHECK(fd_worst_rel_error(build, {&p1, &p2, &p3}, 1e-4) < 1e-8);
}

TEST_CASE("autograd matches central differences through the nonlinear ops") {
    Rng rng(12);
    const Mat x = random_mat(4, 6, rng);
    FdParam p1(6, 8, rng), p2(8, 8, rng), p3(1, 8, rng), p4(1, 8, rng);
    const Mat target = random_mat(4, 8, rng);

    const auto build = [&](Graph& g) {
        const int h1 = g.tanh_op(g.matmul(g.input(x), g.param(&p1.value, &p1.grad)));
        const int h2 = g.silu(g.add_row(g.matmul(h1, g.param(&p2.value, &p2.grad)),
                                        g.param(&p3.value, &p3.grad)));
        const int ln = g.layernorm_rows(h2);
        const int mr = g.mul_row(ln, g.param(&p4.value, &p4.grad));
        const int had = g.hadamard(mr, h2);
        const int sm = g.softmax_rows(g.scale(g.matmul(had, g.transpose(had)), 0.2));
        const int att = g.matmul(sm, ln);
        return g.mean_sq_error_masked(att, g.input(target), {1, 1, 1, 1});
    };
    CHECK(fd_worst_rel_error(build, {&p1, &p2, &p3, &p4}, 1e-5) < 1e-5);
}

TEST_CASE("autograd matches central differences through causal attention and cross entropy") {
    Rng rng(13);
    FdParam emb(7, 6, rng), wq(6, 6, rng), wk(6, 6, rng), wv(6, 6, rng), head(6, 7, rng);

    const auto build = [&](Graph& g) {
        const int e = g.gather_rows(g.param(&emb.value, &emb.grad), {2, 0, 4, 1});
        const int q = g.matmul(e, g.param(&wq.value, &wq.grad));
        const int k = g.matmul(e, g.param(&wk.value, &wk.grad));
        const int v = g.matmul(e, g.param(&wv.value, &wv.grad));
        const int sc = g.scale(g.matmul(q, g.transpose(k)), 1.0 / std::sqrt(6.0));
        const int o = g.matmul(g.softmax_rows_causal(sc), v);
        const int logits = g.matmul(g.layernorm_rows(o), g.param(&head.value, &head.grad));
        return g.cross_entropy_rows(logits, {1, 3, 0, 6});
    };
    CHECK(fd_worst_rel_error(build, {&emb, &wq, &wk, &wv, &head}, 1e-5) < 1e-6);
}

TEST_CASE("softmax rows are simplex points and the causal variant zeroes the future") {
    Rng rng(14);
    const Mat scores = random_mat(5, 5, rng, 1.5);
    Graph g;
    const int plain = g.softmax_rows(g.input(scores));
    const int causal = g.softmax_rows_causal(g.input(scores));

    for (int r = 0; r < 5; ++r) {
        double sum_plain = 0.0, sum_causal = 0.0;
        for (int c = 0; c < 5; ++c) {
            const double pv = g.value(plain).at(r, c);
            CHECK(pv > 0.0);
            sum_plain += pv;
            const double cv = g.value(causal).at(r, c);
            if (c > r) {
                CHECK(cv == 0.0);
            } else {
                CHECK(cv > 0.0);
            }
            sum_causal += cv;
        }
        CHECK(sum_plain == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(sum_causal == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("layernorm standardizes each row") {
    Rng rng(15);
    const Mat x = random_mat(3, 16, rng, 2.0);
    Graph g;
    const Mat& y = g.value(g.layernorm_rows(g.input(x)));
    for (int r = 0; r < y.rows; ++r) {
        double mean = 0.0, var = 0.0;
        for (int c = 0; c < y.cols; ++c) {
            mean += y.at(r, c);
        }
        mean /= y.cols;
        for (int c = 0; c < y.cols; ++c) {
            var += (y.at(r, c) - mean) * (y.at(r, c) - mean);
        }
        var /= y.cols;
        CHECK(std::abs(mean) < 1e-12);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
    }
}

TEST_CASE("flow interpolant hits both endpoints exactly") {
    Rng rng(21);
    const Mat a = random_mat(4, 6, rng);

    Rng noise_rng(22);
    const FlowSample at_zero = noise_action(a, 0.0, noise_rng);
    CHECK(at_zero.a_tau == at_zero.eps);

    Rng noise_rng2(22);
    const FlowSample at_one = noise_action(a, 1.0, noise_rng2);
    CHECK(at_one.a_tau == at_one.a);

    const Mat t = velocity_target(at_one);
    for (size_t i = 0; i < t.data.size(); ++i) {
        CHECK(t.data[i] == at_one.eps.data[i] - a.data[i]);
    }

    Rng r3(23);
    CHECK_THROWS_WITH_AS(noise_action(a, 1.5, r3), "flow time outside [0, 1]", ConfigError);
    CHECK_THROWS_WITH_AS(noise_action(a, -0.1, r3), "flow time outside [0, 1]", ConfigError);
}

TEST_CASE("flow loss ignores masked rows entirely") {
    Rng rng(24);
    const Mat a = random_mat(5, 3, rng);
    Rng noise_rng(25);
    FlowSample s = noise_action(a, 0.4, noise_rng);
    s.mask = {0, 1, 1, 0, 1};

    Mat pred = random_mat(5, 3, rng);
    const double base = fm_loss(pred, s);
    pred.at(0, 0) = 1e9;
    pred.at(3, 2) = -777.0;
    CHECK(fm_loss(pred, s) == base);

    s.mask = {0, 0, 0, 0, 0};
    CHECK_THROWS_WITH_AS(fm_loss(pred, s), "empty loss support", ConfigError);
}

TEST_CASE("masked chunk rows receive exactly zero gradient") {
    auto params = init_params(mini_config(Variant::mmdit), 31);
    randomize_params(params, 32);
    const ExpertConfig& cfg = params.config;
    const ExpertInput in = make_input(cfg, 0, 33);

    Rng rng(34);
    FlowSample s = noise_action(make_chunk(cfg, 0), 0.6, rng);
    rtcsched::apply_rtc_mask(s, 1);

    Graph g;
    const int v = forward_expert(g, params, in, s.a_tau, s.tau);
    const int loss = g.mean_sq_error_masked(v, g.input(velocity_target(s)), s.mask);
    g.backward(loss);

    const Mat& dv = g.grad(v);
    double live = 0.0;
    for (int c = 0; c < dv.cols; ++c) {
        CHECK(dv.at(0, c) == 0.0);
        live += std::abs(dv.at(1, c)) + std::abs(dv.at(2, c));
    }
    CHECK(live > 0.0);
}

TEST_CASE("zero-initialized expert predicts exactly zero velocity") {
    for (const Variant variant : {Variant::mmdit, Variant::naive_dit}) {
        CAPTURE(variant_name(variant));
        auto params = init_params(mini_config(variant), 41);
        const ExpertConfig& cfg = params.config;
        const ExpertInput in = make_input(cfg, 1, 42);

        Rng rng(43);
        const FlowSample s = noise_action(make_chunk(cfg, 1), 0.35, rng);
        Graph g;
        const Mat& v = g.value(forward_expert(g, params, in, s.a_tau, s.tau));
        for (const double x : v.data) {
            CHECK(x == 0.0);
        }

        double expected = 0.0;
        for (size_t i = 0; i < s.a.data.size(); ++i) {
            const double d = s.eps.data[i] - s.a.data[i];
            expected += d * d;
        }
        expected /= static_cast<double>(s.a.data.size());
        CHECK(fm_loss(v, s) == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("zero-initialized expert predicts zero at the default model size") {
    ExpertConfig cfg;
    auto params = init_params(cfg, 44);
    const ExpertInput in = make_input(cfg, 2, 45);
    Rng rng(46);
    const FlowSample s = noise_action(make_chunk(cfg, 2), 0.7, rng);
    Graph g;
    const Mat& v = g.value(forward_expert(g, params, in, s.a_tau, s.tau));
    for (const double x : v.data) {
        CHECK(x == 0.0);
    }
}

TEST_CASE("tau features interleave sines and cosines of doubling frequencies") {
    const Mat f0 = tau_feature_row(0.0, 8);
    for (int k = 0; k < 4; ++k) {
        CHECK(f0.data[2 * k] == 0.0);
        CHECK(f0.data[2 * k + 1] == 1.0);
    }
    const Mat fh = tau_feature_row(0.5, 8);
    const double pi = std::acos(-1.0);
    CHECK(fh.data[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(fh.data[1] == doctest::Approx(std::cos(pi / 2)).epsilon(1e-12));
    CHECK(fh.data[2] == doctest::Approx(std::sin(pi)).epsilon(1e-12));
    CHECK(fh.data[3] == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("joint attention ignores VL token order once positions are removed") {
    ExpertConfig cfg = mini_config(Variant::mmdit);
    cfg.vl_tokens = 4;
    cfg.max_tokens = 12;
    auto params = init_params(cfg, 51);
    randomize_params(params, 52);

    const ExpertInput in = make_input(cfg, 0, 53);
    Rng rng(54);
    const Mat a_tau = random_mat(cfg.horizon, cfg.action_dims, rng);

    const auto forward = [&]() {
        Graph g;
        return g.value(forward_expert(g, params, in, a_tau, 0.3));
    };

    Tensor& pos = params.store.get("enc.vl_pos");
    const Mat saved_pos = pos.value;
    const Mat before = forward();

    // Swapping the encoder blocks that produce tokens 1 and 2 permutes the
    // VL stream; with positions intact the output must move.
    Tensor& w2 = params.store.get("enc.w2");
    Tensor& b2 = params.store.get("enc.b2");
    const auto swap_blocks = [&]() {
        const int d = cfg.width;
        for (int r = 0; r < w2.value.rows; ++r) {
            for (int c = 0; c < d; ++c) {
                std::swap(w2.value.at(r, c), w2.value.at(r, d + c));
            }
        }
        for (int c = 0; c < d; ++c) {
            std::swap(b2.value.at(0, c), b2.value.at(0, d + c));
        }
    };

    swap_blocks();
    CHECK(max_abs_diff(before, forward()) > 1e-6);
    swap_blocks();

    std::fill(pos.value.data.begin(), pos.value.data.end(), 0.0);
    const Mat base = forward();
    swap_blocks();
    CHECK(max_abs_diff(base, forward()) < 1e-9);

    pos.value = saved_pos;
}

TEST_CASE("euler integration of a constant field is exact") {
    Rng rng(61);
    const Mat eps = random_mat(3, 4, rng);
    const Mat c = random_mat(3, 4, rng, 0.3);
    const VelocityField field = [&](const Mat&, double) { return c; };

    for (const int steps : {1, 4, 10}) {
        const Mat out = integrate_flow(field, eps, steps, Mat(0, 0));
        for (size_t i = 0; i < out.data.size(); ++i) {
            CHECK(out.data[i] ==
                  doctest::Approx(eps.data[i] - c.data[i]).epsilon(1e-12).scale(1.0));
        }
    }
}

TEST_CASE("euler integration of a proportional field matches the closed form") {
    Rng rng(62);
    const Mat eps = random_mat(2, 5, rng);
    const double alpha = 0.8;
    const VelocityField field = [&](const Mat& a, double) {
        Mat v = a;
        for (double& x : v.data) {
            x *= alpha;
        }
        return v;
    };
    const int steps = 25;
    const double factor = std::pow(1.0 - alpha / steps, steps);
    const Mat out = integrate_flow(field, eps, steps, Mat(0, 0));
    for (size_t i = 0; i < out.data.size(); ++i) {
        CHECK(out.data[i] == doctest::Approx(eps.data[i] * factor).epsilon(1e-12));
    }
}

TEST_CASE("committed prefix rows pass through integration bit for bit") {
    Rng rng(63);
    const Mat eps = random_mat(6, 4, rng);
    Mat prefix = random_mat(2, 4, rng);
    const VelocityField field = [&](const Mat& a, double tau) {
        Mat v = a;
        for (double& x : v.data) {
            x = std::tanh(x) + tau;
        }
        return v;
    };
    const Mat out = integrate_flow(field, eps, 7, prefix);
    for (int r = 0; r < prefix.rows; ++r) {
        for (int c = 0; c < prefix.cols; ++c) {
            CHECK(out.at(r, c) == prefix.at(r, c));
        }
    }

    CHECK_THROWS_WITH_AS(integrate_flow(field, eps, 0, Mat(0, 0)),
                         "flow integration needs at least one step", ConfigError);
    CHECK_THROWS_WITH_AS(integrate_flow(field, eps, 3, random_mat(7, 4, rng)),
                         "committed prefix longer than the chunk", ConfigError);
    CHECK_THROWS_WITH_AS(integrate_flow(field, eps, 3, random_mat(2, 3, rng)),
                         "committed prefix has wrong column count", ConfigError);
}

TEST_CASE("analytic gradients match finite differences for both expert variants") {
    for (const Variant variant : {Variant::mmdit, Variant::naive_dit}) {
        CAPTURE(variant_name(variant));
        auto params = init_params(mini_config(variant), 71);
        randomize_params(params, 72);
        CHECK(params.store.total_params() <= 10000);

        const ExpertConfig& cfg = params.config;
        const ExpertInput in = make_input(cfg, 1, 73);
        Rng rng(74);
        FlowSample s = noise_action(make_chunk(cfg, 3), 0.37, rng);
        rtcsched::apply_rtc_mask(s, 1);
        const Mat target = velocity_target(s);

        const LossBuilder flow_loss = [&, s, target](Graph& g, ExpertParams& p) {
            const int v = forward_expert(g, p, in, s.a_tau, s.tau);
            return g.mean_sq_error_masked(v, g.input(target), s.mask);
        };
        const GradCheckReport flow_report = check_gradients(params, flow_loss);
        CAPTURE(flow_report.worst_tensor);
        CHECK(flow_report.max_rel_error < 1e-4);

        const std::vector<int> tokens{1, 3, 0, 2, 4};
        const LossBuilder lm_loss = [&](Graph& g, ExpertParams& p) {
            return pretrain_loss(g, p, in, tokens);
        };
        const GradCheckReport lm_report = check_gradients(params, lm_loss);
        CAPTURE(lm_report.worst_tensor);
        CHECK(lm_report.max_rel_error < 1e-4);
    }
}

TEST_CASE("variants are parameter-matched within one percent") {
    const auto count = [](const ExpertConfig& cfg) {
        return init_params(cfg, 1).store.total_params();
    };

    const size_t mini_mm = count(mini_config(Variant::mmdit));
    const size_t mini_nd = count(mini_config(Variant::naive_dit));
    CHECK(std::abs(double(mini_mm) - double(mini_nd)) / double(mini_mm) < 0.01);

    ExpertConfig full_mm;
    ExpertConfig full_nd;
    full_nd.variant = Variant::naive_dit;
    const size_t n_mm = count(full_mm);
    const size_t n_nd = count(full_nd);
    CHECK(std::abs(double(n_mm) - double(n_nd)) / double(n_mm) < 0.01);
}

TEST_CASE("fresh pretrain head scores every token at ln vocab") {
    for (const Variant variant : {Variant::mmdit, Variant::naive_dit}) {
        auto params = init_params(mini_config(variant), 81);
        const ExpertInput in = make_input(params.config, 0, 82);
        const double loss = pretrain_loss_value(params, in, {0, 2, 4, 1});
        CHECK(loss == doctest::Approx(std::log(5.0)).epsilon(1e-9));
    }
}

TEST_CASE("pretrain head learns a deterministic sequence") {
    auto params = init_params(mini_config(Variant::mmdit), 83);
    std::vector<PretrainItem> items;
    items.push_back({make_input(params.config, 0, 84), {1, 2, 3, 1, 2}});

    TrainConfig cfg;
    cfg.steps = 300;
    cfg.batch_size = 2;
    cfg.lr = 5e-3;
    cfg.seed = 85;
    const TrainReport report = train_pretrain(params, items, cfg);

    CHECK(report.initial_validation == doctest::Approx(std::log(5.0)).epsilon(1e-9));
    CHECK(report.final_validation < 0.15);
    CHECK(static_cast<int>(report.losses.size()) == cfg.steps);
}

TEST_CASE("pretrain rejects bad token sequences") {
    auto params = init_params(mini_config(Variant::mmdit), 86);
    const ExpertInput in = make_input(params.config, 0, 87);
    CHECK_THROWS_WITH_AS(pretrain_loss_value(params, in, {}), "empty token sequence",
                         ConfigError);
    CHECK_THROWS_WITH_AS(pretrain_loss_value(params, in, {0, 5}), "token id outside vocabulary",
                         DataError);
    CHECK_THROWS_WITH_AS(pretrain_loss_value(params, in, {0, 1, 2, 3, 4, 0, 1}),
                         "token sequence exceeds the model's max_tokens", ConfigError);
}

TEST_CASE("flow training halves the validation loss on a small task") {
    ExpertConfig mini = mini_config(Variant::mmdit);
    mini.action_dims = 8;
    auto params = init_params(mini, 91);

    std::vector<FlowItem> items;
    items.push_back({make_input(mini, 0, 92), make_chunk(mini, 0)});
    items.push_back({make_input(mini, 1, 93), make_chunk(mini, 1)});

    TrainConfig cfg;
    cfg.steps = 400;
    cfg.batch_size = 4;
    cfg.lr = 5e-3;
    cfg.seed = 94;
    cfg.rtc.d_max = 1;
    const TrainReport report = train_flow(params, items, cfg);

    CHECK(static_cast<int>(report.losses.size()) == cfg.steps);
    CHECK(report.final_validation < 0.5 * report.initial_validation);

    // The trained sampler should be insensitive to step count and must carry
    // a committed prefix through unchanged.
    Rng rng(95);
    const Mat eps = random_mat(mini.horizon, mini.action_dims, rng, 1.0);
    Mat prefix(1, mini.action_dims);
    for (int c = 0; c < prefix.cols; ++c) {
        prefix.at(0, c) = items[0].chunk.at(0, c);
    }
    Mat coarse = sample_actions(params, items[0].input, eps, 10, prefix);
    Mat fine = sample_actions(params, items[0].input, eps, 100, prefix);
    for (int c = 0; c < prefix.cols; ++c) {
        CHECK(coarse.at(0, c) == prefix.at(0, c));
        CHECK(fine.at(0, c) == prefix.at(0, c));
    }
    double mean_diff = 0.0;
    for (size_t i = 0; i < coarse.data.size(); ++i) {
        mean_diff += std::abs(coarse.data[i] - fine.data[i]);
    }
    mean_diff /= static_cast<double>(coarse.data.size());
    CHECK(mean_diff < 0.05);
    CHECK(max_abs_diff(coarse, eps) > 0.1);
}

TEST_CASE("training is deterministic for a fixed seed") {
    ExpertConfig mini = mini_config(Variant::mmdit);
    mini.action_dims = 8;
    std::vector<FlowItem> items;
    items.push_back({make_input(mini, 0, 96), make_chunk(mini, 0)});

    TrainConfig cfg;
    cfg.steps = 30;
    cfg.batch_size = 2;
    cfg.lr = 2e-3;
    cfg.seed = 97;
    cfg.rtc.d_max = 1;

    auto a = init_params(mini, 98);
    auto b = init_params(mini, 98);
    const TrainReport ra = train_flow(a, items, cfg);
    const TrainReport rb = train_flow(b, items, cfg);
    CHECK(ra.losses == rb.losses);
    CHECK(ra.final_validation == rb.final_validation);
    for (size_t i = 0; i < a.store.tensors.size(); ++i) {
        CHECK(a.store.tensors[i].value == b.store.tensors[i].value);
    }
}

TEST_CASE("freezing the encoder leaves its tensors untouched") {
    ExpertConfig mini = mini_config(Variant::mmdit);
    mini.action_dims = 8;
    auto params = init_params(mini, 99);
    std::vector<FlowItem> items;
    items.push_back({make_input(mini, 1, 100), make_chunk(mini, 1)});

    std::vector<Mat> before;
    for (const Tensor& t : params.store.tensors) {
        before.push_back(t.value);
    }

    TrainConfig cfg;
    cfg.steps = 20;
    cfg.batch_size = 2;
    cfg.lr = 1e-2;
    cfg.seed = 101;
    cfg.rtc.d_max = 1;
    cfg.freeze_encoder = true;
    train_flow(params, items, cfg);

    bool any_moved = false;
    for (size_t i = 0; i < params.store.tensors.size(); ++i) {
        const Tensor& t = params.store.tensors[i];
        if (t.name.rfind("enc.", 0) == 0) {
            CHECK(t.value == before[i]);
        } else if (!(t.value == before[i])) {
            any_moved = true;
        }
    }
    CHECK(any_moved);
}

TEST_CASE("chunking delays are uniform and pin exactly the delayed rows") {
    rtcsched::RtcTrainRule rule;
    rule.d_max = 6;
    Rng rng(111);
    std::vector<int> counts(7, 0);
    for (int i = 0; i < 70000; ++i) {
        const int d = rtcsched::sample_delay(rule, rng);
        REQUIRE(d >= 0);
        REQUIRE(d <= 6);
        ++counts[d];
    }
    for (const int c : counts) {
        CHECK(c > 10000 - 400);
        CHECK(c < 10000 + 400);
    }

    rtcsched::RtcTrainRule no_zero;
    no_zero.d_max = 3;
    no_zero.include_zero_delay = false;
    for (int i = 0; i < 5000; ++i) {
        const int d = rtcsched::sample_delay(no_zero, rng);
        REQUIRE(d >= 1);
        REQUIRE(d <= 3);
    }

    rtcsched::RtcTrainRule empty;
    empty.d_max = 0;
    empty.include_zero_delay = false;
    CHECK_THROWS_WITH_AS(empty.validate(8), "rtc delay range is empty with zero delays excluded",
                         ConfigError);
    rtcsched::RtcTrainRule wide;
    wide.d_max = 8;
    CHECK_THROWS_WITH_AS(wide.validate(8), "rtc d_max must leave at least one live chunk row",
                         ConfigError);

    Rng noise_rng(112);
    const Mat a = random_mat(5, 3, noise_rng);
    Rng draw(113);
    FlowSample s = noise_action(a, 0.5, draw);
    const FlowSample untouched = s;
    rtcsched::apply_rtc_mask(s, 0);
    CHECK(s.a_tau == untouched.a_tau);
    CHECK(s.mask == untouched.mask);

    rtcsched::apply_rtc_mask(s, 2);
    for (int c = 0; c < 3; ++c) {
        CHECK(s.a_tau.at(0, c) == a.at(0, c));
        CHECK(s.a_tau.at(1, c) == a.at(1, c));
        CHECK(s.a_tau.at(2, c) == untouched.a_tau.at(2, c));
    }
    CHECK(s.mask == std::vector<uint8_t>{0, 0, 1, 1, 1});
    CHECK_THROWS_WITH_AS(rtcsched::apply_rtc_mask(s, 5),
                         "rtc delay must leave at least one live chunk row", ConfigError);
}

TEST_CASE("checkpoints round trip through float32 and rewrite identically") {
    auto params = init_params(mini_config(Variant::naive_dit), 121);
    randomize_params(params, 122);
    params.step = 77;

    const fs::path p1 = fs::temp_directory_path() / "psi_ck_rt.bin";
    const fs::path p2 = fs::temp_directory_path() / "psi_ck_rt2.bin";
    save_checkpoint(p1.string(), params);
    ExpertParams loaded = load_checkpoint(p1.string());

    CHECK(loaded.config == params.config);
    CHECK(loaded.init_seed == params.init_seed);
    CHECK(loaded.step == params.step);
    REQUIRE(loaded.store.tensors.size() == params.store.tensors.size());
    for (size_t i = 0; i < params.store.tensors.size(); ++i) {
        const Tensor& orig = params.store.tensors[i];
        const Tensor& got = loaded.store.tensors[i];
        CHECK(got.name == orig.name);
        REQUIRE(got.value.same_shape(orig.value));
        for (size_t j = 0; j < orig.value.data.size(); ++j) {
            CHECK(got.value.data[j] ==
                  static_cast<double>(static_cast<float>(orig.value.data[j])));
        }
    }

    save_checkpoint(p2.string(), loaded);
    ExpertParams reloaded = load_checkpoint(p2.string());
    save_checkpoint(p1.string(), reloaded);
    CHECK(slurp(p1) == slurp(p2));

    fs::remove(p1);
    fs::remove(p2);
}

TEST_CASE("checkpoint loading rejects corrupt files") {
    auto params = init_params(mini_config(Variant::mmdit), 123);
    const fs::path good = fs::temp_directory_path() / "psi_ck_good.bin";
    const fs::path bad = fs::temp_directory_path() / "psi_ck_bad.bin";
    save_checkpoint(good.string(), params);
    const std::string content = slurp(good);

    SUBCASE("bad magic") {
        spit(bad, "PSI0XX" + content.substr(6));
        CHECK_THROWS_WITH_AS(load_checkpoint(bad.string()), "bad magic: not a checkpoint file",
                             DataError);
    }
    SUBCASE("unsupported version") {
        std::string mutated = content;
        const size_t at = mutated.find("version 1");
        mutated.replace(at, 9, "version 2");
        spit(bad, mutated);
        CHECK_THROWS_WITH_AS(load_checkpoint(bad.string()),
                             "unsupported checkpoint version 2, expected 1", DataError);
    }
    SUBCASE("truncated blob") {
        spit(bad, content.substr(0, content.size() - 64));
        CHECK_THROWS_WITH_AS(load_checkpoint(bad.string()), "truncated file", DataError);
    }
    SUBCASE("header not json") {
        const size_t h0 = content.find('\n', content.find('\n') + 1) + 1;
        std::string mutated = content.substr(0, h0) + "not json" + content.substr(h0 + 8);
        spit(bad, mutated);
        CHECK_THROWS_WITH_AS(load_checkpoint(bad.string()),
                             "malformed checkpoint header: not valid JSON", DataError);
    }
    SUBCASE("missing field") {
        const size_t h0 = content.find('\n', content.find('\n') + 1) + 1;
        const size_t h1 = content.find('\n', h0);
        auto header = nlohmann::json::parse(content.substr(h0, h1 - h0));
        header.erase("step");
        const std::string line = header.dump();
        spit(bad, content.substr(0, h0) + line + content.substr(h1));
        CHECK_THROWS_WITH_AS(load_checkpoint(bad.string()),
                             "checkpoint header missing required field", DataError);
    }
    SUBCASE("tensor table mismatch") {
        const size_t h0 = content.find('\n', content.find('\n') + 1) + 1;
        const size_t h1 = content.find('\n', h0);
        auto header = nlohmann::json::parse(content.substr(h0, h1 - h0));
        header["tensors"][0]["name"] = "enc.task_emb_renamed";
        const std::string line = header.dump();
        spit(bad, content.substr(0, h0) + line + content.substr(h1));
        CHECK_THROWS_WITH_AS(load_checkpoint(bad.string()),
                             "checkpoint tensor table does not match the model layout",
                             DataError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_checkpoint((fs::temp_directory_path() / "psi_ck_nope.bin").string()),
                        DataError);
    }

    fs::remove(good);
    fs::remove(bad);
}

TEST_CASE("expert rejects malformed conditioning inputs") {
    auto params = init_params(mini_config(Variant::mmdit), 131);
    const ExpertConfig& cfg = params.config;
    Rng rng(132);
    const Mat a_tau = random_mat(cfg.horizon, cfg.action_dims, rng);

    ExpertInput in = make_input(cfg, 0, 133);
    in.task_id = 9;
    Graph g;
    CHECK_THROWS_WITH_AS(forward_expert(g, params, in, a_tau, 0.5), "task id outside task table",
                         ConfigError);

    in = make_input(cfg, 0, 133);
    in.context.pop_back();
    Graph g2;
    CHECK_THROWS_WITH_AS(forward_expert(g2, params, in, a_tau, 0.5),
                         "context vector has wrong dimension", ConfigError);

    in = make_input(cfg, 0, 133);
    Graph g3;
    CHECK_THROWS_WITH_AS(forward_expert(g3, params, in, random_mat(2, cfg.action_dims, rng), 0.5),
                         "action chunk has wrong shape", ConfigError);
}

TEST_CASE("config validation rejects inconsistent shapes") {
    ExpertConfig cfg;
    cfg.width = 63;
    CHECK_THROWS_WITH_AS(cfg.validate(), "expert width must divide evenly across heads",
                         ConfigError);
    cfg = ExpertConfig{};
    cfg.vl_tokens = 1;
    CHECK_THROWS_WITH_AS(cfg.validate(),
                         "expert needs at least 2 VL tokens (task slot + encoded context)",
                         ConfigError);
    cfg = ExpertConfig{};
    cfg.tau_features = 5;
    CHECK_THROWS_WITH_AS(cfg.validate(), "tau_features must be even (sin/cos pairs)",
                         ConfigError);
    CHECK_THROWS_WITH_AS(variant_from_name("transformer"), "unknown expert variant: transformer",
                         ConfigError);
    CHECK(variant_from_name("mmdit") == Variant::mmdit);
    CHECK(variant_from_name("naive_dit") == Variant::naive_dit);
}
