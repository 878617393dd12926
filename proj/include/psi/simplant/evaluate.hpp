#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <psi/actioncore/types.hpp>
#include <psi/rtcsched/scheduler.hpp>
#include <psi/simplant/plant.hpp>
#include <psi/simplant/tasks.hpp>

namespace psi::simplant {

inline constexpr int kTrackedChannels = 32;  ///< 28 upper + height + 3 torso

struct RolloutResult {
    bool success = false;               ///< all subgoals, in order, in time
    std::vector<uint8_t> subgoal_ok;    ///< one flag per subgoal
    std::vector<double> rmse;           ///< command tracking error per channel
    int length = 0;                     ///< ticks executed

    void validate() const;  ///< success must equal the conjunction of flags
};

struct EvalReport {
    int trials = 0;
    int successes = 0;
    std::vector<int> subgoal_successes;
    std::vector<RolloutResult> rollouts;

    std::string summary() const;  ///< "k/N"
};

/// Replays a recorded episode open loop through the plant at the episode's
/// own frame rate and scores it against the task.
RolloutResult replay_episode(const TaskSpec& task, const actioncore::Episode& episode,
                             const PlantLimits& limits = {});

/// Closed-loop evaluation: each trial runs the scheduler against a fresh
/// plant (initial pose jittered from `seed`) for task.time_limit ticks.
/// A policy that never completes the task is a low score, not an error.
EvalReport evaluate(const rtcsched::ChunkPolicy& policy, const TaskSpec& task,
                    const rtcsched::SchedulerConfig& sched, int trials, uint64_t seed,
                    const PlantLimits& limits = {});

}  // namespace psi::simplant
