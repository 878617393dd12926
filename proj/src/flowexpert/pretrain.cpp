#include "psi/flowexpert/pretrain.hpp"

#include <cmath>
#include <string>

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

int causal_attention(Graph& g, ExpertParams& params, int h, const std::string& prefix,
                     int width, int heads) {
    const int q = linear(g, params, h, prefix + "wq", prefix + "bq");
    const int k = g.matmul(h, P(g, params, prefix + "wk"));
    const int v = linear(g, params, h, prefix + "wv", prefix + "bv");
    const int head_dim = width / heads;
    std::vector<int> outs;
    for (int i = 0; i < heads; ++i) {
        const int c0 = i * head_dim;
        const int c1 = c0 + head_dim;
        const int scores = g.scale(g.matmul(g.slice_cols(q, c0, c1),
                                            g.transpose(g.slice_cols(k, c0, c1))),
                                   1.0 / std::sqrt(static_cast<double>(head_dim)));
        outs.push_back(g.matmul(g.softmax_rows_causal(scores), g.slice_cols(v, c0, c1)));
    }
    return linear(g, params, g.concat_cols(outs), prefix + "wo", prefix + "bo");
}

}  // namespace

int pretrain_loss(Graph& g, ExpertParams& params, const ExpertInput& input,
                  const std::vector<int>& tokens) {
    const ExpertConfig& cfg = params.config;
    require(!tokens.empty(), "empty token sequence");
    for (const int t : tokens) {
        require_data(t >= 0 && t < cfg.vocab_size, "token id outside vocabulary");
    }
    const int K = cfg.vl_tokens;
    const int N = static_cast<int>(tokens.size());
    require(K + N <= cfg.max_tokens, "token sequence exceeds the model's max_tokens");

    const int context = encode_context(g, params, input);
    const int prefix = linear(g, params, context, "pre.proj_w", "pre.proj_b");
    const int embedded = g.gather_rows(P(g, params, "pre.tok_emb"), tokens);

    int x = g.concat_rows(prefix, embedded);
    x = g.add(x, g.slice_rows(P(g, params, "pre.pos_emb"), 0, K + N));

    for (int b = 0; b < cfg.pretrain_blocks; ++b) {
        const std::string blk = "pre" + std::to_string(b);
        const int attn = causal_attention(g, params, g.layernorm_rows(x), blk + ".attn.",
                                          cfg.pretrain_width, cfg.pretrain_heads);
        x = g.add(x, attn);
        const int h = g.silu(linear(g, params, g.layernorm_rows(x), blk + ".mlp_w1",
                                    blk + ".mlp_b1"));
        x = g.add(x, linear(g, params, h, blk + ".mlp_w2", blk + ".mlp_b2"));
    }

    const int predictive = g.slice_rows(g.layernorm_rows(x), K - 1, K + N - 1);
    const int logits = linear(g, params, predictive, "pre.head_w", "pre.head_b");
    return g.cross_entropy_rows(logits, tokens);
}

double pretrain_loss_value(ExpertParams& params, const ExpertInput& input,
                           const std::vector<int>& tokens) {
    Graph g;
    const int loss = pretrain_loss(g, params, input, tokens);
    return g.value(loss).data[0];
}

}  // namespace psi::flowexpert
