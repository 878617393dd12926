#include "psi/fasttok/tokenizer.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <unordered_map>

#include <json.hpp>

#include "psi/common/errors.hpp"

namespace psi::fasttok {

namespace {

using nlohmann::json;

uint64_t pack_pair(int a, int b) {
    return (static_cast<uint64_t>(static_cast<uint32_t>(a)) << 32) | static_cast<uint32_t>(b);
}

}  // namespace

void TokenizerConfig::validate() const {
    require(action_horizon >= 1, "tokenizer action_horizon must be >= 1");
    require(scale >= 1, "tokenizer scale must be >= 1");
    require(dims_per_step >= 1, "tokenizer dims_per_step must be >= 1");
    require(vocab_size > base_symbols(), "tokenizer vocab_size must exceed the base symbol count");
}

void TokenizerModel::validate() const {
    config.validate();
    require_data(vocab_count() <= config.vocab_size, "tokenizer vocabulary exceeds vocab_size");
    const int base = config.base_symbols();
    for (size_t i = 0; i < merges.size(); ++i) {
        const MergeRule& r = merges[i];
        const int id = base + static_cast<int>(i);
        require_data(r.result == id, "merge rule results must be sequential from the base count");
        require_data(r.left >= 0 && r.left < id && r.right >= 0 && r.right < id,
                     "merge rule references an undefined symbol");
    }
}

std::vector<int> quantize(const std::vector<double>& x, int scale) {
    require(scale >= 1, "tokenizer scale must be >= 1");
    std::vector<int> symbols(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        require_data(std::abs(x[i]) <= 1.0, "unnormalized action");
        // std::round rounds half away from zero.
        symbols[i] = static_cast<int>(std::round(static_cast<double>(scale) * x[i])) + scale;
    }
    return symbols;
}

std::vector<double> dequantize(const std::vector<int>& symbols, int scale) {
    require(scale >= 1, "tokenizer scale must be >= 1");
    std::vector<double> x(symbols.size());
    for (size_t i = 0; i < symbols.size(); ++i) {
        require_data(symbols[i] >= 0 && symbols[i] <= 2 * scale, "symbol outside quantizer range");
        x[i] = static_cast<double>(symbols[i] - scale) / static_cast<double>(scale);
    }
    return x;
}

std::vector<double> dct_forward(const std::vector<double>& x, int horizon, int dims) {
    require(horizon >= 1 && dims >= 1, "dct shape must be positive");
    require_data(x.size() == static_cast<size_t>(horizon) * static_cast<size_t>(dims),
                 "dct input size mismatch");
    if (horizon == 1) {
        return x;
    }
    const double pi = 3.14159265358979323846;
    std::vector<double> out(x.size());
    for (int d = 0; d < dims; ++d) {
        for (int k = 0; k < horizon; ++k) {
            double acc = 0.0;
            for (int t = 0; t < horizon; ++t) {
                acc += x[static_cast<size_t>(t * dims + d)] *
                       std::cos(pi * (2.0 * t + 1.0) * k / (2.0 * horizon));
            }
            const double s = k == 0 ? std::sqrt(1.0 / horizon) : std::sqrt(2.0 / horizon);
            out[static_cast<size_t>(k * dims + d)] = s * acc;
        }
    }
    return out;
}

std::vector<double> dct_inverse(const std::vector<double>& X, int horizon, int dims) {
    require(horizon >= 1 && dims >= 1, "dct shape must be positive");
    require_data(X.size() == static_cast<size_t>(horizon) * static_cast<size_t>(dims),
                 "dct input size mismatch");
    if (horizon == 1) {
        return X;
    }
    const double pi = 3.14159265358979323846;
    std::vector<double> out(X.size());
    for (int d = 0; d < dims; ++d) {
        for (int t = 0; t < horizon; ++t) {
            double acc = 0.0;
            for (int k = 0; k < horizon; ++k) {
                const double s = k == 0 ? std::sqrt(1.0 / horizon) : std::sqrt(2.0 / horizon);
                acc += s * X[static_cast<size_t>(k * dims + d)] *
                       std::cos(pi * (2.0 * t + 1.0) * k / (2.0 * horizon));
            }
            out[static_cast<size_t>(t * dims + d)] = acc;
        }
    }
    return out;
}

TokenizerModel fit_bpe(const std::vector<std::vector<int>>& corpus, const TokenizerConfig& config) {
    config.validate();
    require_data(!corpus.empty(), "empty corpus");
    const int base = config.base_symbols();
    for (const auto& seq : corpus) {
        for (int s : seq) {
            require_data(s >= 0 && s < base, "corpus symbol outside base range");
        }
    }

    std::vector<std::vector<int>> work = corpus;
    // Exact global pair counts plus, per pair, the set of sequences that ever
    // contained it (an over-approximation kept only to limit rescans).
    std::unordered_map<uint64_t, long long> counts;
    std::unordered_map<uint64_t, std::set<int>> occurs_in;
    for (size_t si = 0; si < work.size(); ++si) {
        const auto& seq = work[si];
        for (size_t i = 0; i + 1 < seq.size(); ++i) {
            const uint64_t key = pack_pair(seq[i], seq[i + 1]);
            ++counts[key];
            occurs_in[key].insert(static_cast<int>(si));
        }
    }

    TokenizerModel model;
    model.config = config;
    int next_symbol = base;
    while (next_symbol < config.vocab_size) {
        uint64_t best_key = 0;
        long long best_count = 0;
        for (const auto& [key, count] : counts) {
            if (count > best_count || (count == best_count && key < best_key)) {
                best_key = key;
                best_count = count;
            }
        }
        if (best_count < 2) {
            break;
        }
        const int a = static_cast<int>(best_key >> 32);
        const int b = static_cast<int>(best_key & 0xffffffffu);
        model.merges.push_back({a, b, next_symbol});

        const std::set<int> affected = occurs_in[best_key];
        for (int si : affected) {
            auto& seq = work[static_cast<size_t>(si)];
            std::vector<int> merged;
            merged.reserve(seq.size());
            bool changed = false;
            for (size_t i = 0; i < seq.size();) {
                if (i + 1 < seq.size() && seq[i] == a && seq[i + 1] == b) {
                    merged.push_back(next_symbol);
                    i += 2;
                    changed = true;
                } else {
                    merged.push_back(seq[i]);
                    ++i;
                }
            }
            if (!changed) {
                continue;
            }
            for (size_t i = 0; i + 1 < seq.size(); ++i) {
                const auto it = counts.find(pack_pair(seq[i], seq[i + 1]));
                if (--(it->second) == 0) {
                    counts.erase(it);
                }
            }
            for (size_t i = 0; i + 1 < merged.size(); ++i) {
                const uint64_t key = pack_pair(merged[i], merged[i + 1]);
                ++counts[key];
                occurs_in[key].insert(si);
            }
            seq = std::move(merged);
        }
        require_internal(counts.find(best_key) == counts.end(),
                         "pair count bookkeeping left a merged pair behind");
        ++next_symbol;
    }
    return model;
}

std::vector<int> apply_merges(const TokenizerModel& model, std::vector<int> symbols) {
    for (const MergeRule& rule : model.merges) {
        std::vector<int> merged;
        merged.reserve(symbols.size());
        for (size_t i = 0; i < symbols.size();) {
            if (i + 1 < symbols.size() && symbols[i] == rule.left && symbols[i + 1] == rule.right) {
                merged.push_back(rule.result);
                i += 2;
            } else {
                merged.push_back(symbols[i]);
                ++i;
            }
        }
        symbols = std::move(merged);
    }
    return symbols;
}

std::vector<int> expand_tokens(const TokenizerModel& model, const std::vector<int>& tokens) {
    const int base = model.config.base_symbols();
    std::vector<int> out;
    std::vector<int> stack;
    for (int t : tokens) {
        require_data(t >= 0 && t < model.vocab_count(), "unknown token");
        stack.push_back(t);
        while (!stack.empty()) {
            const int s = stack.back();
            stack.pop_back();
            if (s < base) {
                out.push_back(s);
                continue;
            }
            const MergeRule& r = model.merges[static_cast<size_t>(s - base)];
            stack.push_back(r.right);
            stack.push_back(r.left);
        }
    }
    return out;
}

std::vector<int> encode(const TokenizerModel& model, const std::vector<double>& x) {
    require_data(x.size() == static_cast<size_t>(model.config.flat_dims()),
                 "encode input has wrong dimension");
    const auto coeffs = dct_forward(x, model.config.action_horizon, model.config.dims_per_step);
    return apply_merges(model, quantize(coeffs, model.config.scale));
}

std::vector<double> decode(const TokenizerModel& model, const std::vector<int>& tokens) {
    const std::vector<int> symbols = expand_tokens(model, tokens);
    require_data(symbols.size() == static_cast<size_t>(model.config.flat_dims()),
                 "malformed token sequence");
    const auto coeffs = dequantize(symbols, model.config.scale);
    return dct_inverse(coeffs, model.config.action_horizon, model.config.dims_per_step);
}

ReconstructionReport reconstruction_report(const TokenizerModel& model,
                                           const std::vector<std::vector<double>>& corpus) {
    require_data(!corpus.empty(), "empty corpus");
    ReconstructionReport report;
    double l1_sum = 0.0;
    size_t entries = 0;
    size_t token_total = 0;
    for (const auto& x : corpus) {
        const std::vector<int> tokens = encode(model, x);
        const std::vector<double> back = decode(model, tokens);
        for (size_t i = 0; i < x.size(); ++i) {
            const double err = std::abs(back[i] - x[i]);
            l1_sum += err;
            report.max_abs_error = std::max(report.max_abs_error, err);
        }
        entries += x.size();
        token_total += tokens.size();
    }
    report.mean_l1 = l1_sum / static_cast<double>(entries);
    report.mean_token_length =
        static_cast<double>(token_total) / static_cast<double>(corpus.size());
    return report;
}

void save_tokenizer(const std::filesystem::path& path, const TokenizerModel& model) {
    model.validate();
    json j;
    j["format_version"] = 1;
    j["config"] = {
        {"action_horizon", model.config.action_horizon},
        {"scale", model.config.scale},
        {"vocab_size", model.config.vocab_size},
        {"dims_per_step", model.config.dims_per_step},
    };
    json merges = json::array();
    for (const MergeRule& r : model.merges) {
        merges.push_back({r.left, r.right, r.result});
    }
    j["merges"] = std::move(merges);

    std::ofstream os(path, std::ios::trunc);
    require_data(os.good(), "cannot open tokenizer checkpoint for writing: " + path.string());
    os << j.dump(2) << '\n';
    os.flush();
    require_data(os.good(), "failed to write tokenizer checkpoint: " + path.string());
}

TokenizerModel load_tokenizer(const std::filesystem::path& path) {
    std::ifstream is(path);
    require_data(is.good(), "cannot open tokenizer checkpoint: " + path.string());
    json j;
    try {
        is >> j;
    } catch (const json::exception&) {
        throw DataError("malformed tokenizer checkpoint: not valid JSON");
    }
    try {
        require_data(j.at("format_version").get<int>() == 1,
                     "unsupported tokenizer checkpoint version");
        TokenizerModel model;
        const json& c = j.at("config");
        model.config.action_horizon = c.at("action_horizon").get<int>();
        model.config.scale = c.at("scale").get<int>();
        model.config.vocab_size = c.at("vocab_size").get<int>();
        model.config.dims_per_step = c.at("dims_per_step").get<int>();
        for (const json& m : j.at("merges")) {
            require_data(m.is_array() && m.size() == 3, "malformed merge rule");
            model.merges.push_back({m[0].get<int>(), m[1].get<int>(), m[2].get<int>()});
        }
        model.validate();
        return model;
    } catch (const json::exception&) {
        throw DataError("tokenizer checkpoint missing required field");
    }
}

}  // namespace psi::fasttok
