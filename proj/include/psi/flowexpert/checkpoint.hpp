#pragma once

#include <string>

#include "psi/flowexpert/params.hpp"

namespace psi::flowexpert {

// Checkpoint file layout:
//   line 1   magic "PSI0CK"
//   line 2   "version 1"
//   line 3   JSON header: variant, full config, init_seed, step, and the
//            tensor table (name, rows, cols) in storage order
//   blob     all tensor values as float32 little-endian, in the same order
//
// Values are stored in float32, so a save/load round trip quantizes the
// parameters to float precision.
inline constexpr const char* kCheckpointMagic = "PSI0CK";
inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const ExpertParams& params);

ExpertParams load_checkpoint(const std::string& path);

}  // namespace psi::flowexpert
