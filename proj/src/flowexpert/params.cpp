#include "psi/flowexpert/params.hpp"

#include <cmath>

#include "psi/common/errors.hpp"
#include "psi/common/rng.hpp"

namespace psi::flowexpert {

const char* variant_name(Variant v) {
    return v == Variant::mmdit ? "mmdit" : "naive_dit";
}

Variant variant_from_name(const std::string& name) {
    if (name == "mmdit") {
        return Variant::mmdit;
    }
    if (name == "naive_dit") {
        return Variant::naive_dit;
    }
    throw ConfigError("unknown expert variant: " + name);
}

void ExpertConfig::validate() const {
    require(width >= 2 && blocks >= 1 && heads >= 1, "expert width/blocks/heads must be positive");
    require(width % heads == 0, "expert width must divide evenly across heads");
    require(vl_tokens >= 2, "expert needs at least 2 VL tokens (task slot + encoded context)");
    require(horizon >= 1, "expert horizon must be >= 1");
    require(action_dims >= 1 && context_dim >= 1 && proprio_dim >= 1,
            "expert input dims must be positive");
    require(task_count >= 1, "expert task_count must be >= 1");
    require(encoder_hidden >= 1 && mlp_hidden >= 1 && tau_features >= 2,
            "expert hidden sizes must be positive");
    require(tau_features % 2 == 0, "tau_features must be even (sin/cos pairs)");
    require(vocab_size >= 2, "pretrain vocab must be >= 2");
    require(pretrain_width >= 2 && pretrain_blocks >= 1 && pretrain_heads >= 1,
            "pretrain head sizes must be positive");
    require(pretrain_width % pretrain_heads == 0,
            "pretrain width must divide evenly across heads");
    require(max_tokens > vl_tokens, "max_tokens must exceed the VL prefix length");
}

int matched_naive_mlp_hidden(const ExpertConfig& config) {
    // Removed per block: the VL modulation head, D x 6D weights + 6D biases.
    // Added per extra hidden unit: two stream MLPs at 2D + 1 params each.
    const double d = config.width;
    const double removed = 6.0 * d * d + 6.0 * d;
    const double per_unit = 2.0 * (2.0 * d + 1.0);
    return config.mlp_hidden + static_cast<int>(std::llround(removed / per_unit));
}

Tensor& ParamStore::add(const std::string& name, int rows, int cols) {
    require_internal(index.count(name) == 0, "duplicate parameter tensor: " + name);
    index[name] = tensors.size();
    tensors.push_back({name, Mat(rows, cols), Mat(rows, cols)});
    return tensors.back();
}

Tensor& ParamStore::get(const std::string& name) {
    const auto it = index.find(name);
    require_internal(it != index.end(), "unknown parameter tensor: " + name);
    return tensors[it->second];
}

const Tensor& ParamStore::get(const std::string& name) const {
    const auto it = index.find(name);
    require_internal(it != index.end(), "unknown parameter tensor: " + name);
    return tensors[it->second];
}

size_t ParamStore::total_params() const {
    size_t n = 0;
    for (const Tensor& t : tensors) {
        n += t.value.size();
    }
    return n;
}

void ParamStore::zero_grads() {
    for (Tensor& t : tensors) {
        std::fill(t.grad.data.begin(), t.grad.data.end(), 0.0);
    }
}

namespace {

void fill_normal(Mat& m, Rng& rng, double stdev) {
    for (double& v : m.data) {
        v = rng.normal(0.0, stdev);
    }
}

void init_linear(Tensor& w, Rng& rng) {
    fill_normal(w.value, rng, 1.0 / std::sqrt(static_cast<double>(w.value.rows)));
}

// No key bias: adding a constant to every key shifts each attention row
// uniformly, which softmax cancels, so the parameter would be inert.
void add_attention(ParamStore& s, const std::string& prefix, int width) {
    s.add(prefix + ".wq", width, width);
    s.add(prefix + ".bq", 1, width);
    s.add(prefix + ".wk", width, width);
    s.add(prefix + ".wv", width, width);
    s.add(prefix + ".bv", 1, width);
    s.add(prefix + ".wo", width, width);
    s.add(prefix + ".bo", 1, width);
}

void add_mlp(ParamStore& s, const std::string& prefix, int width, int hidden) {
    s.add(prefix + ".mlp_w1", width, hidden);
    s.add(prefix + ".mlp_b1", 1, hidden);
    s.add(prefix + ".mlp_w2", hidden, width);
    s.add(prefix + ".mlp_b2", 1, width);
}

bool is_zero_init(const std::string& name) {
    // adaLN-zero: modulation heads, the final modulation, and both output
    // heads start at exactly zero. Biases start at zero everywhere.
    if (name.find("mod_w") != std::string::npos || name.find("mod_b") != std::string::npos) {
        return true;
    }
    if (name == "exp.head_w" || name == "exp.head_b") {
        return true;
    }
    if (name == "pre.head_w" || name == "pre.head_b") {
        return true;
    }
    const size_t sep = name.find_last_of("._");
    return sep != std::string::npos && sep + 1 < name.size() && name[sep + 1] == 'b';
}

bool is_embedding(const std::string& name) {
    return name.find("emb") != std::string::npos || name.find("pos") != std::string::npos;
}

}  // namespace

ExpertParams init_params(const ExpertConfig& config, uint64_t seed) {
    config.validate();
    ExpertParams p;
    p.config = config;
    p.init_seed = seed;
    ParamStore& s = p.store;

    const int D = config.width;
    const int K = config.vl_tokens;
    const int mlp_hidden = config.variant == Variant::mmdit ? config.mlp_hidden
                                                            : matched_naive_mlp_hidden(config);

    s.add("enc.task_emb", config.task_count, D);
    s.add("enc.w1", config.context_dim + config.proprio_dim, config.encoder_hidden);
    s.add("enc.b1", 1, config.encoder_hidden);
    s.add("enc.w2", config.encoder_hidden, (K - 1) * D);
    s.add("enc.b2", 1, (K - 1) * D);
    s.add("enc.vl_pos", K, D);

    s.add("exp.a_proj_w", config.action_dims, D);
    s.add("exp.a_proj_b", 1, D);
    s.add("exp.a_pos", config.horizon, D);
    s.add("exp.tau_w1", config.tau_features, D);
    s.add("exp.tau_b1", 1, D);
    s.add("exp.tau_w2", D, D);
    s.add("exp.tau_b2", 1, D);

    for (int b = 0; b < config.blocks; ++b) {
        const std::string blk = "blk" + std::to_string(b);
        if (config.variant == Variant::mmdit) {
            s.add(blk + ".vl.mod_w", D, 6 * D);
            s.add(blk + ".vl.mod_b", 1, 6 * D);
        }
        s.add(blk + ".a.mod_w", D, 6 * D);
        s.add(blk + ".a.mod_b", 1, 6 * D);
        add_attention(s, blk + ".vl.attn", D);
        add_attention(s, blk + ".a.attn", D);
        add_mlp(s, blk + ".vl", D, mlp_hidden);
        add_mlp(s, blk + ".a", D, mlp_hidden);
    }

    s.add("exp.final_mod_w", D, 2 * D);
    s.add("exp.final_mod_b", 1, 2 * D);
    s.add("exp.head_w", D, config.action_dims);
    s.add("exp.head_b", 1, config.action_dims);

    const int Dp = config.pretrain_width;
    s.add("pre.tok_emb", config.vocab_size, Dp);
    s.add("pre.pos_emb", config.max_tokens, Dp);
    s.add("pre.proj_w", D, Dp);
    s.add("pre.proj_b", 1, Dp);
    for (int b = 0; b < config.pretrain_blocks; ++b) {
        const std::string blk = "pre" + std::to_string(b);
        add_attention(s, blk + ".attn", Dp);
        add_mlp(s, blk, Dp, 2 * Dp);
    }
    s.add("pre.head_w", Dp, config.vocab_size);
    s.add("pre.head_b", 1, config.vocab_size);

    Rng rng(mix_seed(seed, 0xE1));
    for (Tensor& t : s.tensors) {
        if (is_zero_init(t.name)) {
            continue;
        }
        if (is_embedding(t.name)) {
            fill_normal(t.value, rng, 0.02);
        } else {
            init_linear(t, rng);
        }
    }
    return p;
}

void randomize_params(ExpertParams& params, uint64_t seed, double stdev) {
    Rng rng(mix_seed(seed, 0xE2));
    for (Tensor& t : params.store.tensors) {
        fill_normal(t.value, rng, stdev);
    }
}

ExpertConfig mini_config(Variant variant) {
    ExpertConfig c;
    c.variant = variant;
    c.width = 12;
    c.blocks = 1;
    c.heads = 2;
    c.vl_tokens = 2;
    c.horizon = 3;
    c.context_dim = 6;
    c.task_count = 2;
    c.encoder_hidden = 6;
    c.mlp_hidden = 24;
    c.tau_features = 4;
    c.vocab_size = 5;
    c.pretrain_width = 8;
    c.pretrain_blocks = 1;
    c.pretrain_heads = 2;
    c.max_tokens = 8;
    return c;
}

}  // namespace psi::flowexpert
