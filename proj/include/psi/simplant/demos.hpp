#pragma once

#include <cstdint>
#include <vector>

#include <psi/actioncore/types.hpp>
#include <psi/simplant/plant.hpp>
#include <psi/simplant/tasks.hpp>

namespace psi::simplant {

struct DemoOptions {
    double control_rate = 30.0;   ///< command rate, Hz
    double nominal_speed = 0.25;  ///< base translation speed, m/s
    double jitter = 1.0;          ///< waypoint jitter scale; 0 disables
    PlantLimits limits;
};

/// Generates n scripted demonstrations of `task`: min-jerk joint moves,
/// rotate-then-translate base moves, seeded jitter on waypoints and segment
/// durations. Every episode is verified by open-loop replay through the
/// plant before it is returned; a task that cannot be completed inside its
/// time limit raises "infeasible task". Same seed, same episodes, bit for
/// bit. n = 0 yields an empty set.
std::vector<actioncore::Episode> generate_demos(const TaskSpec& task, int n, uint64_t seed,
                                                const DemoOptions& opt = {});

}  // namespace psi::simplant
