#include <psi/cli/config.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include <psi/actioncore/resample.hpp>
#include <psi/actioncore/types.hpp>
#include <psi/common/errors.hpp>
#include <psi/common/rng.hpp>

namespace psi::cli {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

/// Reads one section object, rejecting keys that are not in the handler map.
template <typename Fn>
void read_section(const json& j, const std::string& section, Fn&& field) {
    if (!j.contains(section)) return;
    const json& s = j.at(section);
    require(s.is_object(), "config section must be an object: " + section);
    for (const auto& [key, value] : s.items()) {
        require(field(key, value), "unknown config key: " + section + "." + key);
    }
}

template <typename T>
bool assign(const json& v, T& out) {
    out = v.get<T>();
    return true;
}

}  // namespace

void PipelineConfig::validate() const {
    require(!out.empty(), "output directory must not be empty");
    require(flowexpert.horizon == rtcsched.horizon,
            "chunk horizon disagrees between flowexpert and rtcsched");
    require(rtcsched.d_max >= 0 && rtcsched.d_max < rtcsched.horizon,
            "d_max must lie inside the chunk horizon");
    require(fasttok.scale > 0 && fasttok.vocab > 0 && fasttok.horizon >= 1,
            "tokenizer section values must be positive");
    if (flowexpert.token_data.empty()) {
        const int worst_chunk = fasttok.horizon * actioncore::kTaskDims;
        require(flowexpert.max_tokens >= flowexpert.vl_tokens + worst_chunk,
                "max_tokens cannot cover an uncompressed token chunk");
    }
    require(simplant.episodes >= 1, "episodes per task must be at least 1");
    require(simplant.trials >= 1, "evaluation trials must be at least 1");
    require(flowexpert.pretrain_steps >= 1 && flowexpert.posttrain_steps >= 1 &&
                flowexpert.finetune_steps >= 1,
            "stage step budgets must be at least 1");
    require(flowexpert.batch_size >= 1, "batch size must be at least 1");
    require(flowexpert.lr > 0.0, "learning rate must be positive");

    actioncore::Rational::parse(actioncore.resample).validate();
    if (actioncore.normalization != "fit") {
        require(std::filesystem::exists(actioncore.normalization),
                "normalization stats file not found: " + actioncore.normalization);
    }
    if (!flowexpert.token_data.empty()) {
        require(std::filesystem::exists(flowexpert.token_data),
                "token data file not found: " + flowexpert.token_data);
    }
    auto check_task = [](const std::string& ref) {
        if (ref == "reach" || ref.rfind("synthetic:", 0) == 0) {
            task_id_of(ref);
            return;
        }
        require(std::filesystem::exists(ref), "task spec file not found: " + ref);
    };
    check_task(simplant.task);
    for (const auto& t : simplant.extra_tasks) check_task(t);
}

PipelineConfig config_from_json(const std::string& body) {
    json j;
    try {
        j = json::parse(body);
    } catch (const json::exception&) {
        throw ConfigError("config is not valid JSON");
    }
    require(j.is_object(), "config must be a JSON object");

    PipelineConfig cfg;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "seed") {
                cfg.seed = value.get<uint64_t>();
            } else if (key == "out") {
                cfg.out = value.get<std::string>();
            } else if (key == "actioncore" || key == "fasttok" || key == "flowexpert" ||
                       key == "rtcsched" || key == "simplant") {
                continue;  // handled below
            } else {
                throw ConfigError("unknown config key: " + key);
            }
        }
        read_section(j, "actioncore", [&](const std::string& k, const json& v) {
            if (k == "normalization") return assign(v, cfg.actioncore.normalization);
            if (k == "resample") return assign(v, cfg.actioncore.resample);
            return false;
        });
        read_section(j, "fasttok", [&](const std::string& k, const json& v) {
            if (k == "scale") return assign(v, cfg.fasttok.scale);
            if (k == "vocab") return assign(v, cfg.fasttok.vocab);
            if (k == "horizon") return assign(v, cfg.fasttok.horizon);
            return false;
        });
        read_section(j, "flowexpert", [&](const std::string& k, const json& v) {
            auto& f = cfg.flowexpert;
            if (k == "variant") return assign(v, f.variant);
            if (k == "width") return assign(v, f.width);
            if (k == "blocks") return assign(v, f.blocks);
            if (k == "heads") return assign(v, f.heads);
            if (k == "vl_tokens") return assign(v, f.vl_tokens);
            if (k == "horizon") return assign(v, f.horizon);
            if (k == "encoder_hidden") return assign(v, f.encoder_hidden);
            if (k == "mlp_hidden") return assign(v, f.mlp_hidden);
            if (k == "pretrain_width") return assign(v, f.pretrain_width);
            if (k == "pretrain_blocks") return assign(v, f.pretrain_blocks);
            if (k == "pretrain_heads") return assign(v, f.pretrain_heads);
            if (k == "max_tokens") return assign(v, f.max_tokens);
            if (k == "pretrain_steps") return assign(v, f.pretrain_steps);
            if (k == "posttrain_steps") return assign(v, f.posttrain_steps);
            if (k == "finetune_steps") return assign(v, f.finetune_steps);
            if (k == "batch_size") return assign(v, f.batch_size);
            if (k == "lr") return assign(v, f.lr);
            if (k == "token_data") return assign(v, f.token_data);
            return false;
        });
        read_section(j, "rtcsched", [&](const std::string& k, const json& v) {
            auto& r = cfg.rtcsched;
            if (k == "control_rate") return assign(v, r.control_rate);
            if (k == "lowlevel_rate") return assign(v, r.lowlevel_rate);
            if (k == "horizon") return assign(v, r.horizon);
            if (k == "s_min") return assign(v, r.s_min);
            if (k == "latency_ms") return assign(v, r.latency_ms);
            if (k == "d_max") return assign(v, r.d_max);
            if (k == "include_zero_delay") return assign(v, r.include_zero_delay);
            return false;
        });
        read_section(j, "simplant", [&](const std::string& k, const json& v) {
            auto& s = cfg.simplant;
            if (k == "task") return assign(v, s.task);
            if (k == "extra_tasks") return assign(v, s.extra_tasks);
            if (k == "episodes") return assign(v, s.episodes);
            if (k == "trials") return assign(v, s.trials);
            return false;
        });
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config field has the wrong type: ") + e.what());
    }
    return cfg;
}

std::string config_to_json(const PipelineConfig& cfg) {
    ordered_json j;
    j["seed"] = cfg.seed;
    j["out"] = cfg.out;
    j["actioncore"] = {{"normalization", cfg.actioncore.normalization},
                       {"resample", cfg.actioncore.resample}};
    j["fasttok"] = {{"scale", cfg.fasttok.scale},
                    {"vocab", cfg.fasttok.vocab},
                    {"horizon", cfg.fasttok.horizon}};
    const auto& f = cfg.flowexpert;
    j["flowexpert"] = {{"variant", f.variant},
                       {"width", f.width},
                       {"blocks", f.blocks},
                       {"heads", f.heads},
                       {"vl_tokens", f.vl_tokens},
                       {"horizon", f.horizon},
                       {"encoder_hidden", f.encoder_hidden},
                       {"mlp_hidden", f.mlp_hidden},
                       {"pretrain_width", f.pretrain_width},
                       {"pretrain_blocks", f.pretrain_blocks},
                       {"pretrain_heads", f.pretrain_heads},
                       {"max_tokens", f.max_tokens},
                       {"pretrain_steps", f.pretrain_steps},
                       {"posttrain_steps", f.posttrain_steps},
                       {"finetune_steps", f.finetune_steps},
                       {"batch_size", f.batch_size},
                       {"lr", f.lr},
                       {"token_data", f.token_data}};
    const auto& r = cfg.rtcsched;
    j["rtcsched"] = {{"control_rate", r.control_rate},
                     {"lowlevel_rate", r.lowlevel_rate},
                     {"horizon", r.horizon},
                     {"s_min", r.s_min},
                     {"latency_ms", r.latency_ms},
                     {"d_max", r.d_max},
                     {"include_zero_delay", r.include_zero_delay}};
    const auto& s = cfg.simplant;
    j["simplant"] = {{"task", s.task},
                     {"extra_tasks", s.extra_tasks},
                     {"episodes", s.episodes},
                     {"trials", s.trials}};
    return j.dump(2) + "\n";
}

void apply_override(PipelineConfig& cfg, const std::string& spec) {
    const size_t eq = spec.find('=');
    require(eq != std::string::npos && eq > 0, "override must look like section.key=value: " + spec);
    const std::string path = spec.substr(0, eq);
    const std::string raw = spec.substr(eq + 1);

    json value;
    try {
        value = json::parse(raw);
    } catch (const json::exception&) {
        value = raw;  // unquoted strings are taken verbatim
    }

    json doc = json::parse(config_to_json(cfg));
    json* node = &doc;
    std::stringstream keys(path);
    std::string key;
    std::vector<std::string> parts;
    while (std::getline(keys, key, '.')) parts.push_back(key);
    require(!parts.empty(), "override must look like section.key=value: " + spec);
    for (size_t i = 0; i + 1 < parts.size(); ++i) {
        require(node->contains(parts[i]), "unknown config key: " + path);
        node = &node->at(parts[i]);
    }
    require(node->is_object() && node->contains(parts.back()), "unknown config key: " + path);
    (*node)[parts.back()] = value;

    cfg = config_from_json(doc.dump());
}

int task_id_of(const std::string& ref) {
    if (ref == "reach") return 0;
    if (ref.rfind("synthetic:", 0) == 0) {
        const std::string num = ref.substr(10);
        int id = 0;
        try {
            size_t used = 0;
            id = std::stoi(num, &used);
            require_data(used == num.size(), "trailing characters");
        } catch (const std::exception&) {
            throw ConfigError("bad synthetic task reference: " + ref);
        }
        require(id > 0, "synthetic task id must be positive: " + ref);
        return id;
    }
    std::ifstream in(ref);
    require(in.good(), "task spec file not found: " + ref);
    std::stringstream buf;
    buf << in.rdbuf();
    return simplant::task_from_json(buf.str()).task_id;
}

simplant::TaskSpec resolve_task(const std::string& ref, uint64_t seed) {
    if (ref == "reach") return simplant::make_reach_task();
    if (ref.rfind("synthetic:", 0) == 0) {
        const int id = task_id_of(ref);
        return simplant::make_task(id, mix_seed(seed, static_cast<uint64_t>(id)));
    }
    std::ifstream in(ref);
    require(in.good(), "task spec file not found: " + ref);
    std::stringstream buf;
    buf << in.rdbuf();
    return simplant::task_from_json(buf.str());
}

}  // namespace psi::cli
