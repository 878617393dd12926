#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "psi/common/errors.hpp"
#include "psi/common/rng.hpp"
#include "psi/fasttok/tokenizer.hpp"

namespace fs = std::filesystem;
using namespace psi::fasttok;

namespace {

// Independent greedy-BPE oracle: recounts every pair from scratch each
// iteration with an ordered map, no incremental bookkeeping.
std::vector<MergeRule> oracle_bpe(std::vector<std::vector<int>> corpus, int base, int vocab_size) {
    std::vector<MergeRule> merges;
    int next = base;
    while (next < vocab_size) {
        std::map<std::pair<int, int>, long long> counts;
        for (const auto& seq : corpus) {
            for (size_t i = 0; i + 1 < seq.size(); ++i) {
                ++counts[{seq[i], seq[i + 1]}];
            }
        }
        std::pair<int, int> best{-1, -1};
        long long best_count = 1;
        for (const auto& [pair, count] : counts) {
            if (count > best_count) {  // std::map iterates in pair order, so the
                best = pair;           // first maximum is the smallest pair
                best_count = count;
            }
        }
        if (best.first < 0) {
            break;
        }
        merges.push_back({best.first, best.second, next});
        for (auto& seq : corpus) {
            std::vector<int> out;
            for (size_t i = 0; i < seq.size();) {
                if (i + 1 < seq.size() && seq[i] == best.first && seq[i + 1] == best.second) {
                    out.push_back(next);
                    i += 2;
                } else {
                    out.push_back(seq[i]);
                    ++i;
                }
            }
            seq = std::move(out);
        }
        ++next;
    }
    return merges;
}

TokenizerConfig small_config() {
    TokenizerConfig cfg;
    cfg.scale = 4;  // base symbols 0..8
    cfg.vocab_size = 64;
    cfg.dims_per_step = 6;
    return cfg;
}

std::vector<std::vector<int>> structured_corpus(const TokenizerConfig& cfg, int sequences,
                                                int length, uint64_t seed) {
    // Random walks quantized to the base range produce repeating local motifs
    // that BPE can compress.
    psi::Rng rng(seed);
    std::vector<std::vector<int>> corpus;
    for (int s = 0; s < sequences; ++s) {
        std::vector<int> seq;
        int v = cfg.scale;
        for (int i = 0; i < length; ++i) {
            v = std::clamp(v + rng.uniform_int(-1, 1), 0, 2 * cfg.scale);
            seq.push_back(v);
        }
        corpus.push_back(std::move(seq));
    }
    return corpus;
}

}  // namespace

TEST_CASE("quantization of known values") {
    CHECK(quantize({0.12}, 100)[0] == 112);
    CHECK(quantize({0.0}, 100)[0] == 100);
    CHECK(quantize({0.004999}, 100)[0] == 100);
    CHECK(quantize({-1.0}, 100)[0] == 0);
    CHECK(quantize({1.0}, 100)[0] == 200);
    CHECK(dequantize({100}, 100)[0] == 0.0);
    CHECK(dequantize({200}, 100)[0] == 1.0);
    CHECK(dequantize({0}, 100)[0] == -1.0);
    CHECK(std::abs(dequantize(quantize({0.004999}, 100), 100)[0] - 0.004999) < 0.005);
}

TEST_CASE("quantization rejects out-of-range input") {
    CHECK_THROWS_WITH_AS(quantize({1.001}, 100), "unnormalized action", psi::DataError);
    CHECK_THROWS_WITH_AS(quantize({std::nan("")}, 100), "unnormalized action", psi::DataError);
    CHECK_THROWS_AS(dequantize({-1}, 100), psi::DataError);
    CHECK_THROWS_AS(dequantize({201}, 100), psi::DataError);
}

TEST_CASE("round-trip error over the 1e-4 grid never exceeds the half-step bound") {
    double max_err = 0.0;
    for (int i = -10000; i <= 10000; ++i) {
        const double x = static_cast<double>(i) * 1e-4;
        const double back = dequantize(quantize({x}, 100), 100)[0];
        max_err = std::max(max_err, std::abs(back - x));
    }
    CHECK(max_err <= 0.005 + 1e-12);
    // The bound is approached at half-steps.
    const double half = dequantize(quantize({0.005}, 100), 100)[0];
    CHECK(std::abs(half - 0.005) == doctest::Approx(0.005).epsilon(1e-9));
}

TEST_CASE("first merge on a repeating pair corpus") {
    TokenizerConfig cfg = small_config();
    const std::vector<std::vector<int>> corpus(100, std::vector<int>{1, 2, 1, 2});
    const TokenizerModel model = fit_bpe(corpus, cfg);
    REQUIRE(!model.merges.empty());
    CHECK(model.merges[0].left == 1);
    CHECK(model.merges[0].right == 2);
    CHECK(model.merges[0].result == cfg.base_symbols());

    const auto oracle = oracle_bpe(corpus, cfg.base_symbols(), cfg.vocab_size);
    CHECK(model.merges == oracle);
}

TEST_CASE("length-one sequences learn nothing") {
    const TokenizerModel model = fit_bpe({{1}, {2}, {3}, {4}}, small_config());
    CHECK(model.merges.empty());
}

TEST_CASE("repeated symbol merges in documented order") {
    TokenizerConfig cfg = small_config();
    const std::vector<std::vector<int>> corpus(100, std::vector<int>{7, 7, 7, 7});
    const TokenizerModel model = fit_bpe(corpus, cfg);
    const int base = cfg.base_symbols();
    REQUIRE(model.merges.size() >= 2);
    CHECK(model.merges[0] == MergeRule{7, 7, base});
    CHECK(model.merges[1] == MergeRule{base, base, base + 1});
    CHECK(model.merges == oracle_bpe(corpus, base, cfg.vocab_size));
}

TEST_CASE("fit rejects bad corpora") {
    CHECK_THROWS_WITH_AS(fit_bpe({}, small_config()), "empty corpus", psi::DataError);
    CHECK_THROWS_AS(fit_bpe({{99}}, small_config()), psi::DataError);
}

TEST_CASE("fit matches the recount oracle merge for merge") {
    const TokenizerConfig cfg = small_config();
    const auto corpus = structured_corpus(cfg, 40, 30, 555);
    const TokenizerModel model = fit_bpe(corpus, cfg);
    CHECK(model.merges.size() > 5);
    CHECK(model.merges == oracle_bpe(corpus, cfg.base_symbols(), cfg.vocab_size));
    CHECK(model.vocab_count() <= cfg.vocab_size);
}

TEST_CASE("fit is invariant to corpus ordering") {
    const TokenizerConfig cfg = small_config();
    auto corpus = structured_corpus(cfg, 30, 20, 777);
    const TokenizerModel a = fit_bpe(corpus, cfg);
    std::reverse(corpus.begin(), corpus.end());
    const TokenizerModel b = fit_bpe(corpus, cfg);
    CHECK(a.merges == b.merges);
}

TEST_CASE("encoding without merges keeps one token per dimension") {
    TokenizerConfig cfg;
    cfg.scale = 100;
    cfg.vocab_size = 2048;
    cfg.dims_per_step = 48;
    TokenizerModel model;
    model.config = cfg;

    psi::Rng rng(3);
    std::vector<double> x(48);
    for (auto& v : x) {
        v = rng.uniform(-1.0, 1.0);
    }
    CHECK(encode(model, x).size() == 48);
}

TEST_CASE("merges compress a constant corpus") {
    TokenizerConfig cfg;
    cfg.scale = 100;
    cfg.vocab_size = 2048;
    cfg.dims_per_step = 48;
    const std::vector<int> constant(48, cfg.scale);
    const TokenizerModel model = fit_bpe({constant, constant, constant}, cfg);
    const std::vector<double> zero(48, 0.0);
    const auto tokens = encode(model, zero);
    CHECK(tokens.size() < 48);
    CHECK(decode(model, tokens) == zero);
}

TEST_CASE("encode and decode are exact at the symbol level") {
    const TokenizerConfig cfg = small_config();
    const auto corpus = structured_corpus(cfg, 40, cfg.dims_per_step, 901);
    const TokenizerModel model = fit_bpe(corpus, cfg);

    psi::Rng rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> x(static_cast<size_t>(cfg.flat_dims()));
        for (auto& v : x) {
            v = rng.uniform(-1.0, 1.0);
        }
        const auto tokens = encode(model, x);
        CHECK(tokens.size() <= x.size());
        CHECK(expand_tokens(model, tokens) == quantize(x, cfg.scale));
        const auto back = decode(model, tokens);
        for (size_t i = 0; i < x.size(); ++i) {
            CHECK(std::abs(back[i] - x[i]) <= 0.5 / cfg.scale + 1e-12);
        }
    }
}

TEST_CASE("decode rejects malformed input") {
    const TokenizerConfig cfg = small_config();
    const auto corpus = structured_corpus(cfg, 20, cfg.dims_per_step, 44);
    const TokenizerModel model = fit_bpe(corpus, cfg);

    CHECK_THROWS_WITH_AS(decode(model, {}), "malformed token sequence", psi::DataError);
    CHECK_THROWS_WITH_AS(decode(model, std::vector<int>(5, 0)), "malformed token sequence",
                         psi::DataError);
    CHECK_THROWS_WITH_AS(decode(model, {model.vocab_count()}), "unknown token", psi::DataError);

    std::vector<double> x(static_cast<size_t>(cfg.flat_dims()), 0.25);
    auto tokens = encode(model, x);
    tokens.pop_back();
    CHECK_THROWS_WITH_AS(decode(model, tokens), "malformed token sequence", psi::DataError);
}

TEST_CASE("reconstruction metrics") {
    TokenizerConfig cfg;
    cfg.scale = 100;
    cfg.vocab_size = 2048;
    cfg.dims_per_step = 48;

    psi::Rng rng(31);
    std::vector<std::vector<int>> symbol_corpus;
    std::vector<std::vector<double>> value_corpus;
    for (int s = 0; s < 60; ++s) {
        std::vector<double> x(48);
        int v = cfg.scale;
        for (auto& e : x) {
            v = std::clamp(v + rng.uniform_int(-2, 2), 0, 2 * cfg.scale);
            e = static_cast<double>(v - cfg.scale) / cfg.scale;
        }
        symbol_corpus.push_back(quantize(x, cfg.scale));
        value_corpus.push_back(std::move(x));
    }
    const TokenizerModel model = fit_bpe(symbol_corpus, cfg);
    const ReconstructionReport report = reconstruction_report(model, value_corpus);
    CHECK(report.max_abs_error <= 0.005 + 1e-12);
    // Grid points k/100 are representable, so the fit corpus reconstructs with
    // zero error and compresses below one token per dimension.
    CHECK(report.mean_l1 == 0.0);
    CHECK(report.mean_token_length < 48.0);

    psi::Rng rng2(32);
    std::vector<std::vector<double>> offgrid;
    for (int s = 0; s < 20; ++s) {
        std::vector<double> x(48);
        for (auto& e : x) {
            e = rng2.uniform(-1.0, 1.0);
        }
        offgrid.push_back(std::move(x));
    }
    const ReconstructionReport r2 = reconstruction_report(model, offgrid);
    CHECK(r2.max_abs_error <= 0.005 + 1e-12);
    CHECK(r2.mean_l1 > 0.0);

    CHECK_THROWS_WITH_AS(reconstruction_report(model, {}), "empty corpus", psi::DataError);
}

TEST_CASE("dct is the identity at horizon one and orthonormal above") {
    psi::Rng rng(8);
    std::vector<double> x(48);
    for (auto& v : x) {
        v = rng.uniform(-1.0, 1.0);
    }
    CHECK(dct_forward(x, 1, 48) == x);
    CHECK(dct_inverse(x, 1, 48) == x);

    std::vector<double> seq(4 * 6);
    for (auto& v : seq) {
        v = rng.normal();
    }
    const auto X = dct_forward(seq, 4, 6);
    const auto back = dct_inverse(X, 4, 6);
    double norm_x = 0.0;
    double norm_X = 0.0;
    for (size_t i = 0; i < seq.size(); ++i) {
        CHECK(back[i] == doctest::Approx(seq[i]).epsilon(1e-12));
        norm_x += seq[i] * seq[i];
        norm_X += X[i] * X[i];
    }
    CHECK(norm_X == doctest::Approx(norm_x).epsilon(1e-12));
}

TEST_CASE("tokenizer checkpoint round trip") {
    const TokenizerConfig cfg = small_config();
    const auto corpus = structured_corpus(cfg, 30, 25, 606);
    const TokenizerModel model = fit_bpe(corpus, cfg);

    const fs::path p = fs::temp_directory_path() / "psi_tok_ckpt.json";
    save_tokenizer(p, model);
    const TokenizerModel back = load_tokenizer(p);
    CHECK(back == model);

    std::vector<double> x(static_cast<size_t>(cfg.flat_dims()), -0.5);
    CHECK(encode(back, x) == encode(model, x));
    fs::remove(p);
}

TEST_CASE("tokenizer checkpoint rejects bad files") {
    const fs::path p = fs::temp_directory_path() / "psi_tok_bad.json";
    {
        std::ofstream os(p);
        os << "{\"format_version\": 2, \"config\": {}, \"merges\": []}";
    }
    CHECK_THROWS_WITH_AS(load_tokenizer(p), "unsupported tokenizer checkpoint version",
                         psi::DataError);
    {
        std::ofstream os(p);
        os << "not json";
    }
    CHECK_THROWS_AS(load_tokenizer(p), psi::DataError);
    fs::remove(p);
    CHECK_THROWS_AS(load_tokenizer(p), psi::DataError);
}

TEST_CASE("config validation") {
    TokenizerConfig cfg;
    cfg.scale = 0;
    CHECK_THROWS_AS(cfg.validate(), psi::ConfigError);
    cfg.scale = 100;
    cfg.vocab_size = 201;  // equal to base count, no room for merges
    CHECK_THROWS_AS(cfg.validate(), psi::ConfigError);
    cfg.vocab_size = 202;
    cfg.validate();
}
