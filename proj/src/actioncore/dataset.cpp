#include "psi/actioncore/dataset.hpp"

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "psi/common/binio.hpp"
#include "psi/common/errors.hpp"

namespace psi::actioncore {

namespace {

using nlohmann::json;

size_t row_dims(const Episode& ep) {
    return static_cast<size_t>(action_dim(ep.space)) + kProprioDims +
           static_cast<size_t>(ep.context_dim);
}

std::string read_header_line(std::istream& is, const char* what) {
    std::string line;
    if (!std::getline(is, line)) {
        throw DataError(std::string("truncated file: missing ") + what);
    }
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    return line;
}

struct EpisodeHeader {
    int task_id = 0;
    double frame_rate = 0.0;
    size_t frame_count = 0;
    ActionSpace space = ActionSpace::joint36;
    int context_dim = 0;
    uint64_t offset = 0;
    uint64_t nbytes = 0;
};

EpisodeHeader parse_header(const std::string& line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception&) {
        throw DataError("malformed episode header: not valid JSON");
    }
    try {
        EpisodeHeader h;
        h.task_id = j.at("task_id").get<int>();
        h.frame_rate = j.at("frame_rate").get<double>();
        h.frame_count = j.at("frame_count").get<size_t>();
        h.space = action_space_from_name(j.at("space").get<std::string>());
        h.context_dim = j.at("context_dim").get<int>();
        h.offset = j.at("offset").get<uint64_t>();
        h.nbytes = j.at("nbytes").get<uint64_t>();
        return h;
    } catch (const json::exception&) {
        throw DataError("episode header missing required field");
    }
}

}  // namespace

void write_dataset(const std::filesystem::path& path, const std::vector<Episode>& episodes) {
    for (const auto& ep : episodes) {
        ep.validate();
    }

    std::ostringstream manifest;
    uint64_t offset = 0;
    for (const auto& ep : episodes) {
        const uint64_t nbytes = static_cast<uint64_t>(ep.frames()) * row_dims(ep) * 4;
        const json header = {
            {"task_id", ep.task_id},
            {"frame_rate", ep.frame_rate},
            {"frame_count", ep.frames()},
            {"space", action_space_name(ep.space)},
            {"context_dim", ep.context_dim},
            {"offset", offset},
            {"nbytes", nbytes},
        };
        manifest << header.dump() << '\n';
        offset += nbytes;
    }

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    require_data(os.good(), "cannot open dataset file for writing: " + path.string());
    os << kDatasetMagic << '\n';
    os << "version " << kDatasetVersion << '\n';
    os << episodes.size() << '\n';
    os << manifest.str();
    for (const auto& ep : episodes) {
        for (size_t f = 0; f < ep.frames(); ++f) {
            write_f32le_block(os, ep.actions[f].data(), ep.actions[f].size());
            write_f32le_block(os, ep.states[f].data(), ep.states[f].size());
            write_f32le_block(os, ep.contexts[f].data(), ep.contexts[f].size());
        }
    }
    os.flush();
    require_data(os.good(), "failed to write dataset file: " + path.string());
}

std::vector<Episode> read_dataset(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    require_data(is.good(), "cannot open dataset file: " + path.string());

    const std::string magic = read_header_line(is, "magic");
    require_data(magic == kDatasetMagic, "bad magic: not an episode dataset file");

    const std::string version_line = read_header_line(is, "version line");
    require_data(version_line.rfind("version ", 0) == 0, "malformed version line");
    int version = -1;
    try {
        version = std::stoi(version_line.substr(8));
    } catch (const std::exception&) {
        throw DataError("malformed version line");
    }
    require_data(version == kDatasetVersion,
                 "unsupported dataset version " + std::to_string(version) + ", expected " +
                     std::to_string(kDatasetVersion));

    const std::string count_line = read_header_line(is, "episode count");
    size_t n_episodes = 0;
    try {
        n_episodes = static_cast<size_t>(std::stoull(count_line));
    } catch (const std::exception&) {
        throw DataError("malformed episode count line");
    }

    std::vector<EpisodeHeader> headers;
    headers.reserve(n_episodes);
    for (size_t i = 0; i < n_episodes; ++i) {
        headers.push_back(parse_header(read_header_line(is, "episode header")));
    }

    const std::streampos blob_start = is.tellg();
    require_data(blob_start != std::streampos(-1), "truncated file: missing data blob");

    std::vector<Episode> episodes;
    episodes.reserve(n_episodes);
    for (const auto& h : headers) {
        const size_t adim = static_cast<size_t>(action_dim(h.space));
        const size_t dims = adim + kProprioDims + static_cast<size_t>(h.context_dim);
        require_data(h.nbytes == static_cast<uint64_t>(h.frame_count) * dims * 4,
                     "episode header byte count does not match declared layout");

        Episode ep;
        ep.task_id = h.task_id;
        ep.frame_rate = h.frame_rate;
        ep.space = h.space;
        ep.context_dim = h.context_dim;
        ep.actions.reserve(h.frame_count);
        ep.states.reserve(h.frame_count);
        ep.contexts.reserve(h.frame_count);

        is.seekg(blob_start + static_cast<std::streamoff>(h.offset));
        require_data(is.good(), "truncated file: episode offset out of range");
        for (size_t f = 0; f < h.frame_count; ++f) {
            std::vector<float> action(adim);
            std::vector<float> state(kProprioDims);
            std::vector<float> context(static_cast<size_t>(h.context_dim));
            read_f32le_block(is, action.data(), action.size());
            read_f32le_block(is, state.data(), state.size());
            read_f32le_block(is, context.data(), context.size());
            ep.actions.push_back(std::move(action));
            ep.states.push_back(std::move(state));
            ep.contexts.push_back(std::move(context));
        }
        ep.validate();
        episodes.push_back(std::move(ep));
    }
    return episodes;
}

}  // namespace psi::actioncore
