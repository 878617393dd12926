#pragma once

#include <array>
#include <string>
#include <vector>

#include <psi/actioncore/types.hpp>
#include <psi/simplant/plant.hpp>

namespace psi::simplant {

/// One step of a task: either drive the upper body (plus height/torso) to a
/// target configuration, or move the base to a target planar pose. Subgoals
/// complete in order; a subgoal is done at the first tick its channels are
/// all within tolerance.
struct SubGoal {
    enum class Kind : uint8_t { reach = 0, displace = 1 };

    Kind kind = Kind::reach;
    // reach targets
    std::array<double, actioncore::kUpperBodyDims> upper{};
    double height = kStandingHeight;
    std::array<double, 3> torso{};
    // displace targets (world frame, absolute)
    double dx = 0.0;
    double dy = 0.0;
    double yaw = 0.0;
};

struct TaskSpec {
    int task_id = 0;
    std::string name;
    std::vector<SubGoal> subgoals;
    double joint_tol = 0.05;   ///< rad, upper joints and torso
    double base_tol = 0.03;    ///< m, base x/y
    double yaw_tol = 0.05;     ///< rad
    double height_tol = 0.03;  ///< m
    int time_limit = 300;      ///< ticks at the control rate

    void validate() const;
};

bool subgoal_met(const PlantState& s, const SubGoal& g, const TaskSpec& task);

/// Index of the first incomplete subgoal given that `done` subgoals are
/// already complete; advances `done` past every newly satisfied subgoal.
void advance_progress(const PlantState& s, const TaskSpec& task, size_t& done);

/// The 32-dim synthetic context feature: what remains to be done for the
/// active subgoal. Slots [0,28) are upper-joint errors (reach only);
/// [28,30) are either torso roll/pitch errors (reach) or the body-frame
/// remaining displacement (displace); [30] is the yaw error; [31] the
/// height error. All zeros once every subgoal is complete.
std::vector<double> context_feature(const PlantState& s, const TaskSpec& task, size_t done);

/// The committed evaluation task: raise the arms, carry the base forward,
/// then return to rest. Three subgoals, task_id 0.
TaskSpec make_reach_task();

/// Seeded task generator: 3 to 5 alternating reach/displace subgoals with
/// bounded targets. Same seed, same task.
TaskSpec make_task(int task_id, uint64_t seed);

std::string task_to_json(const TaskSpec& task);
TaskSpec task_from_json(const std::string& body);

}  // namespace psi::simplant
