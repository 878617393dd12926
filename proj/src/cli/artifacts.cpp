#include <psi/cli/artifacts.hpp>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <fstream>
#include <sstream>

#include <json.hpp>

#include <psi/cli/config.hpp>
#include <psi/common/errors.hpp>
#include <psi/common/hash.hpp>

namespace psi::cli {

using nlohmann::ordered_json;

void atomic_write_text(const std::filesystem::path& path, const std::string& body) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        require_data(out.good(), "cannot open for writing: " + tmp.string());
        out.write(body.data(), static_cast<std::streamsize>(body.size()));
        require_data(out.good(), "short write: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require_data(in.good(), "cannot open: " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string file_hash_hex(const std::filesystem::path& path) {
    return hex64(hash_file(path));
}

void write_manifest(const std::filesystem::path& out_dir, const RunManifest& manifest) {
    ordered_json j;
    j["schema_version"] = kReportSchemaVersion;
    j["command"] = manifest.command;
    j["version"] = manifest.version.empty() ? kVersion : manifest.version;
    j["config_hash"] = manifest.config_hash;
    j["inputs"] = ordered_json::object();
    for (const auto& [name, hash] : manifest.inputs) j["inputs"][name] = hash;
    j["outputs"] = ordered_json::object();
    for (const auto& [name, hash] : manifest.outputs) j["outputs"][name] = hash;
    j["counters"] = ordered_json::object();
    for (const auto& [name, v] : manifest.counters) j["counters"][name] = v;
    j["wall_ms"] = manifest.wall_ms;
    atomic_write_text(out_dir / ("manifest." + manifest.command + ".json"), j.dump(2) + "\n");
}

void save_norm_stats(const std::filesystem::path& path, const actioncore::NormStats& stats) {
    stats.validate();
    ordered_json j;
    j["schema_version"] = kReportSchemaVersion;
    j["q01"] = stats.q01;
    j["q99"] = stats.q99;
    j["degenerate"] = stats.degenerate;
    atomic_write_text(path, j.dump(2) + "\n");
}

actioncore::NormStats load_norm_stats(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text(path));
        actioncore::NormStats stats;
        stats.q01 = j.at("q01").get<std::vector<double>>();
        stats.q99 = j.at("q99").get<std::vector<double>>();
        stats.degenerate = j.at("degenerate").get<std::vector<uint8_t>>();
        stats.validate();
        return stats;
    } catch (const nlohmann::json::exception&) {
        throw DataError("malformed normalization stats: " + path.string());
    }
}

DirLock::DirLock(const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const std::filesystem::path lock = dir / ".lock";
    fd_ = ::open(lock.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
    require_data(fd_ >= 0, "cannot open lockfile: " + lock.string());
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
        ::close(fd_);
        fd_ = -1;
        throw ConfigError("output directory is locked by another run: " + dir.string());
    }
}

DirLock::~DirLock() {
    if (fd_ >= 0) {
        ::flock(fd_, LOCK_UN);
        ::close(fd_);
    }
}

}  // namespace psi::cli
