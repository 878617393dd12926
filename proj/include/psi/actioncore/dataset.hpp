#pragma once

#include <filesystem>
#include <vector>

#include "psi/actioncore/types.hpp"

namespace psi::actioncore {

inline constexpr const char* kDatasetMagic = "PSI0DS";
inline constexpr int kDatasetVersion = 1;

/// Episode dataset file, version 1:
///
///   PSI0DS\n
///   version 1\n
///   <episode count>\n
///   one JSON header line per episode:
///     {"task_id":..,"frame_rate":..,"frame_count":..,"space":"joint36",
///      "context_dim":..,"offset":..,"nbytes":..}
///   <binary blob>
///
/// The blob holds little-endian float32, row-major [frame x channel], channel
/// order: action components, then proprio state, then context. Offsets are
/// byte positions relative to the start of the blob (the byte after the last
/// manifest newline). Round trips are bit-exact.
void write_dataset(const std::filesystem::path& path, const std::vector<Episode>& episodes);

std::vector<Episode> read_dataset(const std::filesystem::path& path);

}  // namespace psi::actioncore
