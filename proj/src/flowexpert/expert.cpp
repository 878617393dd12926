#include "psi/flowexpert/expert.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "psi/common/errors.hpp"

namespace psi::flowexpert {

namespace {

int P(Graph& g, ExpertParams& params, const std::string& name) {
    Tensor& t = params.store.get(name);
    return g.param(&t.value, &t.grad);
}

int linear(Graph& g, ExpertParams& params, int x, const std::string& w_name,
           const std::string& b_name) {
    return g.add_row(g.matmul(x, P(g, params, w_name)), P(g, params, b_name));
}

int ones_row(Graph& g, int width) {
    Mat ones(1, width);
    std::fill(ones.data.begin(), ones.data.end(), 1.0);
    return g.input(ones);
}

// Six 1 x D rows derived from the tau conditioning vector, in the order
// shift1, scale1, gate1, shift2, scale2, gate2. Scales are stored as
// (1 + scale) so that a zero-initialized head modulates to the identity.
struct Modulation {
    int shift1, scale1, gate1;
    int shift2, scale2, gate2;
};

Modulation modulation(Graph& g, ExpertParams& params, const std::string& prefix, int cond,
                      int width) {
    const int mod = linear(g, params, cond, prefix + ".mod_w", prefix + ".mod_b");
    const int one = ones_row(g, width);
    Modulation m;
    m.shift1 = g.slice_cols(mod, 0, width);
    m.scale1 = g.add(one, g.slice_cols(mod, width, 2 * width));
    m.gate1 = g.slice_cols(mod, 2 * width, 3 * width);
    m.shift2 = g.slice_cols(mod, 3 * width, 4 * width);
    m.scale2 = g.add(one, g.slice_cols(mod, 4 * width, 5 * width));
    m.gate2 = g.slice_cols(mod, 5 * width, 6 * width);
    return m;
}

int modulated_norm(Graph& g, int x, int scale, int shift) {
    return g.add_row(g.mul_row(g.layernorm_rows(x), scale), shift);
}

// Joint multi-head attention over the concatenated [VL ; A] token rows with
// per-stream projections. Returns the attention outputs split back per
// stream, after each stream's output projection.
std::pair<int, int> joint_attention(Graph& g, ExpertParams& params, const std::string& blk,
                                    int vl_h, int a_h, const ExpertConfig& cfg) {
    const std::string vl = blk + ".vl.attn.";
    const std::string a = blk + ".a.attn.";
    const int q = g.concat_rows(linear(g, params, vl_h, vl + "wq", vl + "bq"),
                                linear(g, params, a_h, a + "wq", a + "bq"));
    const int k = g.concat_rows(g.matmul(vl_h, P(g, params, vl + "wk")),
                                g.matmul(a_h, P(g, params, a + "wk")));
    const int v = g.concat_rows(linear(g, params, vl_h, vl + "wv", vl + "bv"),
                                linear(g, params, a_h, a + "wv", a + "bv"));

    const int head_dim = cfg.width / cfg.heads;
    std::vector<int> heads;
    for (int h = 0; h < cfg.heads; ++h) {
        const int c0 = h * head_dim;
        const int c1 = c0 + head_dim;
        const int qh = g.slice_cols(q, c0, c1);
        const int kh = g.slice_cols(k, c0, c1);
        const int vh = g.slice_cols(v, c0, c1);
        const int scores = g.scale(g.matmul(qh, g.transpose(kh)),
                                   1.0 / std::sqrt(static_cast<double>(head_dim)));
        heads.push_back(g.matmul(g.softmax_rows(scores), vh));
    }
    const int joined = g.concat_cols(heads);

    const int K = cfg.vl_tokens;
    const int T = K + cfg.horizon;
    const int vl_out = linear(g, params, g.slice_rows(joined, 0, K), vl + "wo", vl + "bo");
    const int a_out = linear(g, params, g.slice_rows(joined, K, T), a + "wo", a + "bo");
    return {vl_out, a_out};
}

int mlp(Graph& g, ExpertParams& params, int x, const std::string& prefix) {
    const int h = g.silu(linear(g, params, x, prefix + ".mlp_w1", prefix + ".mlp_b1"));
    return linear(g, params, h, prefix + ".mlp_w2", prefix + ".mlp_b2");
}

}  // namespace

Mat tau_feature_row(double tau, int features) {
    require_internal(features >= 2 && features % 2 == 0, "tau feature count must be even");
    Mat row(1, features);
    double freq = std::acos(-1.0) * tau;
    for (int k = 0; k < features / 2; ++k) {
        row.data[2 * k] = std::sin(freq);
        row.data[2 * k + 1] = std::cos(freq);
        freq *= 2.0;
    }
    return row;
}

int encode_context(Graph& g, ExpertParams& params, const ExpertInput& input) {
    const ExpertConfig& cfg = params.config;
    require(input.task_id >= 0 && input.task_id < cfg.task_count, "task id outside task table");
    require(static_cast<int>(input.context.size()) == cfg.context_dim,
            "context vector has wrong dimension");
    require(static_cast<int>(input.proprio.size()) == cfg.proprio_dim,
            "proprio vector has wrong dimension");

    const int task_tok = g.gather_rows(P(g, params, "enc.task_emb"), {input.task_id});

    Mat obs(1, cfg.context_dim + cfg.proprio_dim);
    std::copy(input.context.begin(), input.context.end(), obs.data.begin());
    std::copy(input.proprio.begin(), input.proprio.end(), obs.data.begin() + cfg.context_dim);
    const int h = g.tanh_op(linear(g, params, g.input(obs), "enc.w1", "enc.b1"));
    const int flat = linear(g, params, h, "enc.w2", "enc.b2");
    const int rest = g.reshape(flat, cfg.vl_tokens - 1, cfg.width);

    const int toks = g.concat_rows(task_tok, rest);
    return g.add(toks, P(g, params, "enc.vl_pos"));
}

int tau_embedding(Graph& g, ExpertParams& params, double tau) {
    const int feat = g.input(tau_feature_row(tau, params.config.tau_features));
    const int h = g.silu(linear(g, params, feat, "exp.tau_w1", "exp.tau_b1"));
    return linear(g, params, h, "exp.tau_w2", "exp.tau_b2");
}

int forward_expert(Graph& g, ExpertParams& params, const ExpertInput& input, const Mat& a_tau,
                   double tau) {
    const ExpertConfig& cfg = params.config;
    require(a_tau.rows == cfg.horizon && a_tau.cols == cfg.action_dims,
            "action chunk has wrong shape");

    int vl_x = encode_context(g, params, input);
    const int cond = tau_embedding(g, params, tau);

    int a_x = g.add(linear(g, params, g.input(a_tau), "exp.a_proj_w", "exp.a_proj_b"),
                    P(g, params, "exp.a_pos"));

    for (int b = 0; b < cfg.blocks; ++b) {
        const std::string blk = "blk" + std::to_string(b);
        const bool gated_vl = cfg.variant == Variant::mmdit;
        const Modulation am = modulation(g, params, blk + ".a", cond, cfg.width);

        Modulation vm{};
        int vl_h;
        const int a_h = modulated_norm(g, a_x, am.scale1, am.shift1);
        if (gated_vl) {
            vm = modulation(g, params, blk + ".vl", cond, cfg.width);
            vl_h = modulated_norm(g, vl_x, vm.scale1, vm.shift1);
        } else {
            vl_h = g.layernorm_rows(vl_x);
        }

        const auto [vl_attn, a_attn] = joint_attention(g, params, blk, vl_h, a_h, cfg);
        vl_x = g.add(vl_x, gated_vl ? g.mul_row(vl_attn, vm.gate1) : vl_attn);
        a_x = g.add(a_x, g.mul_row(a_attn, am.gate1));

        const int vl_h2 = gated_vl ? modulated_norm(g, vl_x, vm.scale2, vm.shift2)
                                   : g.layernorm_rows(vl_x);
        const int a_h2 = modulated_norm(g, a_x, am.scale2, am.shift2);

        const int vl_m = mlp(g, params, vl_h2, blk + ".vl");
        const int a_m = mlp(g, params, a_h2, blk + ".a");
        vl_x = g.add(vl_x, gated_vl ? g.mul_row(vl_m, vm.gate2) : vl_m);
        a_x = g.add(a_x, g.mul_row(a_m, am.gate2));
    }

    const int fmod = linear(g, params, cond, "exp.final_mod_w", "exp.final_mod_b");
    const int shift = g.slice_cols(fmod, 0, cfg.width);
    const int scale = g.add(ones_row(g, cfg.width), g.slice_cols(fmod, cfg.width, 2 * cfg.width));
    const int head_in = modulated_norm(g, a_x, scale, shift);
    return linear(g, params, head_in, "exp.head_w", "exp.head_b");
}

}  // namespace psi::flowexpert
