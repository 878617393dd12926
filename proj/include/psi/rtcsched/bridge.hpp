#pragma once

#include <array>
#include <functional>
#include <vector>

#include <psi/actioncore/types.hpp>

namespace psi::rtcsched {

inline constexpr int kLowerJointDims = 15;

/// Full-rate command for the downstream joint controller: the 28 upper-body
/// targets pass through untouched, the 8 locomotion channels have already
/// been expanded into lower-body joint targets.
struct LowLevelCommand {
    std::array<double, actioncore::kUpperBodyDims> upper{};
    std::array<double, kLowerJointDims> lower{};
};

/// Maps the 8 locomotion channels of a chunk action (torso rpy, base
/// height, planar velocities, target yaw) onto 15 lower-body joint targets.
/// Supplied by the plant layer; the bridge treats it as opaque.
using System0Map =
    std::function<std::array<double, kLowerJointDims>(const actioncore::JointAction&)>;

/// Expands one chunk action into a full-rate command.
LowLevelCommand lowlevel_command(const actioncore::JointAction& a, const System0Map& map);

/// Upsamples a control-rate action sequence to the lowlevel rate with
/// zero-order hold: command j (at time j / lowlevel_rate) repeats the most
/// recent control action. Rates must satisfy lowlevel_rate >= control_rate > 0.
std::vector<LowLevelCommand> lowlevel_bridge(const std::vector<actioncore::JointAction>& actions,
                                             double control_rate, double lowlevel_rate,
                                             const System0Map& map);

}  // namespace psi::rtcsched
