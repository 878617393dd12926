#include "psi/flowexpert/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "psi/common/binio.hpp"
#include "psi/common/errors.hpp"

namespace psi::flowexpert {

namespace {

using nlohmann::json;

json config_to_json(const ExpertConfig& c) {
    return json{{"variant", variant_name(c.variant)},
                {"width", c.width},
                {"blocks", c.blocks},
                {"heads", c.heads},
                {"vl_tokens", c.vl_tokens},
                {"horizon", c.horizon},
                {"action_dims", c.action_dims},
                {"context_dim", c.context_dim},
                {"proprio_dim", c.proprio_dim},
                {"task_count", c.task_count},
                {"encoder_hidden", c.encoder_hidden},
                {"mlp_hidden", c.mlp_hidden},
                {"tau_features", c.tau_features},
                {"vocab_size", c.vocab_size},
                {"pretrain_width", c.pretrain_width},
                {"pretrain_blocks", c.pretrain_blocks},
                {"pretrain_heads", c.pretrain_heads},
                {"max_tokens", c.max_tokens}};
}

ExpertConfig config_from_json(const json& j) {
    ExpertConfig c;
    try {
        c.variant = variant_from_name(j.at("variant").get<std::string>());
        c.width = j.at("width").get<int>();
        c.blocks = j.at("blocks").get<int>();
        c.heads = j.at("heads").get<int>();
        c.vl_tokens = j.at("vl_tokens").get<int>();
        c.horizon = j.at("horizon").get<int>();
        c.action_dims = j.at("action_dims").get<int>();
        c.context_dim = j.at("context_dim").get<int>();
        c.proprio_dim = j.at("proprio_dim").get<int>();
        c.task_count = j.at("task_count").get<int>();
        c.encoder_hidden = j.at("encoder_hidden").get<int>();
        c.mlp_hidden = j.at("mlp_hidden").get<int>();
        c.tau_features = j.at("tau_features").get<int>();
        c.vocab_size = j.at("vocab_size").get<int>();
        c.pretrain_width = j.at("pretrain_width").get<int>();
        c.pretrain_blocks = j.at("pretrain_blocks").get<int>();
        c.pretrain_heads = j.at("pretrain_heads").get<int>();
        c.max_tokens = j.at("max_tokens").get<int>();
    } catch (const json::exception&) {
        throw DataError("checkpoint header missing required field");
    }
    return c;
}

std::string read_header_line(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) {
        throw DataError("truncated file");
    }
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    return line;
}

}  // namespace

void save_checkpoint(const std::string& path, const ExpertParams& params) {
    json header;
    header["variant"] = variant_name(params.config.variant);
    header["config"] = config_to_json(params.config);
    header["init_seed"] = params.init_seed;
    header["step"] = params.step;
    json table = json::array();
    for (const Tensor& t : params.store.tensors) {
        table.push_back({{"name", t.name}, {"rows", t.value.rows}, {"cols", t.value.cols}});
    }
    header["tensors"] = table;

    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        require_data(os.good(), "cannot write checkpoint: " + path);
        os << kCheckpointMagic << "\n";
        os << "version " << kCheckpointVersion << "\n";
        os << header.dump() << "\n";
        std::vector<float> buf;
        for (const Tensor& t : params.store.tensors) {
            buf.assign(t.value.data.begin(), t.value.data.end());
            write_f32le_block(os, buf.data(), buf.size());
        }
        require_data(os.good(), "cannot write checkpoint: " + path);
    }
    require_data(std::rename(tmp.c_str(), path.c_str()) == 0,
                 "cannot write checkpoint: " + path);
}

ExpertParams load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require_data(is.good(), "cannot open checkpoint: " + path);

    if (read_header_line(is) != kCheckpointMagic) {
        throw DataError("bad magic: not a checkpoint file");
    }
    const std::string version_line = read_header_line(is);
    if (version_line.rfind("version ", 0) != 0) {
        throw DataError("malformed version line");
    }
    const std::string version = version_line.substr(8);
    if (version != std::to_string(kCheckpointVersion)) {
        throw DataError("unsupported checkpoint version " + version + ", expected 1");
    }

    json header = json::parse(read_header_line(is), nullptr, false);
    if (header.is_discarded()) {
        throw DataError("malformed checkpoint header: not valid JSON");
    }

    ExpertConfig config;
    uint64_t init_seed = 0;
    int64_t step = 0;
    json table;
    try {
        config = config_from_json(header.at("config"));
        init_seed = header.at("init_seed").get<uint64_t>();
        step = header.at("step").get<int64_t>();
        table = header.at("tensors");
    } catch (const json::exception&) {
        throw DataError("checkpoint header missing required field");
    }

    ExpertParams params = init_params(config, init_seed);
    params.step = step;

    require_data(table.is_array() && table.size() == params.store.tensors.size(),
                 "checkpoint tensor table does not match the model layout");
    std::vector<float> buf;
    for (size_t i = 0; i < params.store.tensors.size(); ++i) {
        Tensor& t = params.store.tensors[i];
        const json& row = table[i];
        try {
            require_data(row.at("name").get<std::string>() == t.name &&
                             row.at("rows").get<int>() == t.value.rows &&
                             row.at("cols").get<int>() == t.value.cols,
                         "checkpoint tensor table does not match the model layout");
        } catch (const json::exception&) {
            throw DataError("checkpoint header missing required field");
        }
        buf.resize(t.value.size());
        read_f32le_block(is, buf.data(), buf.size());
        std::copy(buf.begin(), buf.end(), t.value.data.begin());
    }
    return params;
}

}  // namespace psi::flowexpert
