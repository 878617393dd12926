#include <psi/simplant/demos.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>

#include <psi/common/errors.hpp>
#include <psi/common/rng.hpp>
#include <psi/simplant/evaluate.hpp>

namespace psi::simplant {
namespace {

constexpr int kMaxSegmentTicks = 4000;
constexpr double kMinJerkPeak = 1.875;     // peak |s'(u)| of the quintic
constexpr double kRateMargin = 1.15;       // headroom under the slew limit

double min_jerk(double u) {
    return u * u * u * (10.0 + u * (-15.0 + 6.0 * u));
}

double wrap_angle(double a) {
    while (a > M_PI) a -= 2.0 * M_PI;
    while (a < -M_PI) a += 2.0 * M_PI;
    return a;
}

/// Incrementally scripted episode: every emitted command is stored as the
/// float32 row and the internal plant is stepped with that exact rounded
/// command, so open-loop replay reproduces the trajectory bit for bit.
struct Script {
    const TaskSpec& task;
    const DemoOptions& opt;
    double dt;
    PlantState state = neutral_state();
    size_t done = 0;
    actioncore::Episode ep;

    Script(const TaskSpec& t, const DemoOptions& o) : task(t), opt(o), dt(1.0 / o.control_rate) {
        ep.task_id = t.task_id;
        ep.frame_rate = o.control_rate;
        ep.space = actioncore::ActionSpace::joint36;
        ep.context_dim = actioncore::kProprioDims;
    }

    void emit(const actioncore::JointAction& cmd) {
        require(static_cast<int>(ep.frames()) < task.time_limit,
                "infeasible task: demo exceeds the task time limit");
        std::vector<float> srow(actioncore::kProprioDims);
        const actioncore::ProprioState pr = proprio_from_state(state);
        for (int i = 0; i < actioncore::kProprioDims; ++i) srow[static_cast<size_t>(i)] = static_cast<float>(pr[i]);
        const std::vector<double> ctx = context_feature(state, task, done);
        std::vector<float> crow(ctx.size());
        for (size_t i = 0; i < ctx.size(); ++i) crow[i] = static_cast<float>(ctx[i]);
        std::vector<float> arow = actioncore::row_from_joint_action(cmd);

        state = step_plant(state, actioncore::joint_action_from_row(arow), dt, opt.limits);
        advance_progress(state, task, done);

        ep.states.push_back(std::move(srow));
        ep.contexts.push_back(std::move(crow));
        ep.actions.push_back(std::move(arow));
    }
};

/// Drives the upper body, height, and torso to the (jittered) reach target
/// with a min-jerk profile sized under the slew limit, then holds until the
/// true subgoal reads as met.
void play_reach(Script& sc, const SubGoal& goal, const SubGoal& true_goal,
                actioncore::JointAction& hold, Rng& rng) {
    const auto start = sc.state.upper;
    double max_delta = 0.0;
    for (int i = 0; i < actioncore::kUpperBodyDims; ++i) {
        max_delta = std::max(max_delta, std::abs(goal.upper[static_cast<size_t>(i)] - start[static_cast<size_t>(i)]));
    }
    double duration = kMinJerkPeak * max_delta / sc.opt.limits.joint_rate * kRateMargin;
    duration *= 1.0 + 0.1 * rng.uniform(-1.0, 1.0);
    const int move_ticks = std::max(2, static_cast<int>(std::ceil(duration * sc.opt.control_rate)));

    hold.base_height() = goal.height;
    for (int i = 0; i < 3; ++i) hold[actioncore::kTorsoRpyOffset + i] = goal.torso[static_cast<size_t>(i)];
    hold.v_x() = 0.0;
    hold.v_y() = 0.0;
    hold.v_yaw() = 0.0;
    hold.p_yaw() = sc.state.yaw;

    for (int k = 1; k <= move_ticks; ++k) {
        const double s = min_jerk(static_cast<double>(k) / move_ticks);
        for (int i = 0; i < actioncore::kUpperBodyDims; ++i) {
            hold[i] = start[static_cast<size_t>(i)] + s * (goal.upper[static_cast<size_t>(i)] - start[static_cast<size_t>(i)]);
        }
        sc.emit(hold);
    }
    for (int i = 0; i < actioncore::kUpperBodyDims; ++i) hold[i] = goal.upper[static_cast<size_t>(i)];

    int settle = 0;
    while (!subgoal_met(sc.state, true_goal, sc.task)) {
        require(++settle <= kMaxSegmentTicks, "infeasible task: reach target never settles");
        sc.emit(hold);
    }
    sc.emit(hold);
    sc.emit(hold);
}

/// Moves the base to the (jittered) planar target: slew the yaw first, then
/// translate along a straight line at constant body-frame velocity sized to
/// land exactly on the target tick.
void play_displace(Script& sc, const SubGoal& goal, const SubGoal& true_goal,
                   actioncore::JointAction& hold, Rng& rng) {
    hold.v_x() = 0.0;
    hold.v_y() = 0.0;
    hold.v_yaw() = 0.0;
    hold.p_yaw() = goal.yaw;
    int rot = 0;
    const float yaw_cmd = static_cast<float>(goal.yaw);
    while (std::abs(wrap_angle(sc.state.yaw - static_cast<double>(yaw_cmd))) > 1e-12) {
        require(++rot <= kMaxSegmentTicks, "infeasible task: yaw target never settles");
        sc.emit(hold);
    }

    const double rx = goal.dx - sc.state.x;
    const double ry = goal.dy - sc.state.y;
    const double dist = std::hypot(rx, ry);
    if (dist > 1e-9) {
        double duration = dist / sc.opt.nominal_speed;
        duration *= 1.0 + 0.1 * rng.uniform(-1.0, 1.0);
        const int ticks = std::max(1, static_cast<int>(std::ceil(duration * sc.opt.control_rate)));
        const double span = ticks * sc.dt;
        const double c = std::cos(sc.state.yaw);
        const double s = std::sin(sc.state.yaw);
        hold.v_x() = (c * rx + s * ry) / span;
        hold.v_y() = (-s * rx + c * ry) / span;
        for (int k = 0; k < ticks; ++k) sc.emit(hold);
        hold.v_x() = 0.0;
        hold.v_y() = 0.0;
    }

    int settle = 0;
    while (!subgoal_met(sc.state, true_goal, sc.task)) {
        require(++settle <= kMaxSegmentTicks, "infeasible task: base target never settles");
        sc.emit(hold);
    }
    sc.emit(hold);
    sc.emit(hold);
}

SubGoal jitter_goal(const SubGoal& g, const TaskSpec& task, double scale,
                    const PlantLimits& lim, Rng& rng) {
    SubGoal out = g;
    if (scale <= 0.0) return out;
    if (g.kind == SubGoal::Kind::reach) {
        for (auto& q : out.upper) {
            q = std::clamp(q + scale * 0.3 * task.joint_tol * rng.uniform(-1.0, 1.0),
                           lim.joint_min, lim.joint_max);
        }
        out.height = std::clamp(out.height + scale * 0.3 * task.height_tol * rng.uniform(-1.0, 1.0),
                                lim.height_min, lim.height_max);
        for (auto& a : out.torso) {
            a = std::clamp(a + scale * 0.3 * task.joint_tol * rng.uniform(-1.0, 1.0),
                           lim.torso_min, lim.torso_max);
        }
    } else {
        out.dx += scale * 0.3 * task.base_tol * rng.uniform(-1.0, 1.0);
        out.dy += scale * 0.3 * task.base_tol * rng.uniform(-1.0, 1.0);
        out.yaw += scale * 0.3 * task.yaw_tol * rng.uniform(-1.0, 1.0);
    }
    return out;
}

}  // namespace

std::vector<actioncore::Episode> generate_demos(const TaskSpec& task, int n, uint64_t seed,
                                                const DemoOptions& opt) {
    task.validate();
    require(n >= 0, "demo count must be non-negative");
    require(opt.control_rate > 0.0, "control rate must be positive");
    require(opt.nominal_speed > 0.0, "nominal speed must be positive");

    std::vector<actioncore::Episode> out;
    out.reserve(static_cast<size_t>(n));

    for (int e = 0; e < n; ++e) {
        Rng rng(mix_seed(mix_seed(seed, 0xDEu), static_cast<uint64_t>(e)));
        Script sc(task, opt);
        actioncore::JointAction hold = actioncore::pad_to_joint36(
            std::vector<double>(actioncore::kUpperBodyDims, 0.0));

        for (const SubGoal& g : task.subgoals) {
            const SubGoal jg = jitter_goal(g, task, opt.jitter, opt.limits, rng);
            if (g.kind == SubGoal::Kind::reach) {
                play_reach(sc, jg, g, hold, rng);
            } else {
                play_displace(sc, jg, g, hold, rng);
            }
        }
        require_internal(sc.done == task.subgoals.size(), "demo script missed a subgoal");

        const RolloutResult check = replay_episode(task, sc.ep, opt.limits);
        require_internal(check.success, "demo replay failed verification");
        out.push_back(std::move(sc.ep));
    }
    return out;
}

}  // namespace psi::simplant
