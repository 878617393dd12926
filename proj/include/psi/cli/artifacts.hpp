#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <psi/actioncore/normalize.hpp>

namespace psi::cli {

inline constexpr int kReportSchemaVersion = 1;

/// Record of one command run: what ran, on which resolved config, over which
/// input artifacts, producing which outputs. Hashes are FNV-1a over content
/// bytes. The manifest is written atomically at the end of the run.
struct RunManifest {
    std::string command;
    std::string config_hash;
    std::map<std::string, std::string> inputs;   ///< artifact name -> hash
    std::map<std::string, std::string> outputs;  ///< artifact name -> hash
    std::map<std::string, int64_t> counters;     ///< e.g. episode counts
    int64_t wall_ms = 0;
    std::string version;
};

/// Serializes and writes manifest.<command>.json into the output directory.
void write_manifest(const std::filesystem::path& out_dir, const RunManifest& manifest);

/// Write-then-rename so readers never observe a partial file.
void atomic_write_text(const std::filesystem::path& path, const std::string& body);

std::string read_text(const std::filesystem::path& path);

/// Content hash of an existing file, as fixed-width hex.
std::string file_hash_hex(const std::filesystem::path& path);

/// Normalization statistics as a JSON artifact.
void save_norm_stats(const std::filesystem::path& path, const actioncore::NormStats& stats);
actioncore::NormStats load_norm_stats(const std::filesystem::path& path);

/// Advisory exclusive lock on an output directory, released when the holder
/// is destroyed (or the process exits). A second concurrent run against the
/// same directory fails immediately instead of interleaving writes.
class DirLock {
public:
    explicit DirLock(const std::filesystem::path& dir);
    ~DirLock();
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;

private:
    int fd_ = -1;
};

}  // namespace psi::cli
