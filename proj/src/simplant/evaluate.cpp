#include <psi/simplant/evaluate.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>

#include <psi/common/errors.hpp>
#include <psi/common/rng.hpp>

namespace psi::simplant {
namespace {

/// Accumulates squared command-vs-achieved error for the tracked channels.
struct Tracker {
    std::vector<double> sq = std::vector<double>(kTrackedChannels, 0.0);
    int samples = 0;

    void add(const PlantState& state, const actioncore::JointAction& cmd) {
        for (int i = 0; i < actioncore::kUpperBodyDims; ++i) {
            const double e = state.upper[static_cast<size_t>(i)] - cmd[i];
            sq[static_cast<size_t>(i)] += e * e;
        }
        const double eh = state.height - cmd.base_height();
        sq[28] += eh * eh;
        for (int i = 0; i < 3; ++i) {
            const double et = state.torso[static_cast<size_t>(i)] - cmd[actioncore::kTorsoRpyOffset + i];
            sq[static_cast<size_t>(29 + i)] += et * et;
        }
        ++samples;
    }

    std::vector<double> finish() const {
        std::vector<double> out(kTrackedChannels, 0.0);
        if (samples == 0) return out;
        for (int i = 0; i < kTrackedChannels; ++i) {
            out[static_cast<size_t>(i)] = std::sqrt(sq[static_cast<size_t>(i)] / samples);
        }
        return out;
    }
};

std::vector<uint8_t> flags_from_progress(const TaskSpec& task, size_t done) {
    std::vector<uint8_t> ok(task.subgoals.size(), 0);
    for (size_t i = 0; i < done && i < ok.size(); ++i) ok[i] = 1;
    return ok;
}

}  // namespace

void RolloutResult::validate() const {
    bool all = !subgoal_ok.empty();
    for (uint8_t f : subgoal_ok) all = all && f != 0;
    require_internal(success == all, "rollout flags disagree with the success bit");
}

std::string EvalReport::summary() const {
    return std::to_string(successes) + "/" + std::to_string(trials);
}

RolloutResult replay_episode(const TaskSpec& task, const actioncore::Episode& episode,
                             const PlantLimits& limits) {
    task.validate();
    episode.validate();
    require_data(episode.space == actioncore::ActionSpace::joint36,
                 "replay needs joint-space actions");
    const int64_t ticks = static_cast<int64_t>(episode.frames());
    const double dt = 1.0 / episode.frame_rate;

    PlantState state = neutral_state();
    size_t done = 0;
    Tracker tracker;

    for (int64_t t = 0; t < ticks && t < task.time_limit; ++t) {
        const actioncore::JointAction cmd =
            actioncore::joint_action_from_row(episode.actions[static_cast<size_t>(t)]);
        state = step_plant(state, cmd, dt, limits);
        tracker.add(state, cmd);
        advance_progress(state, task, done);
    }

    RolloutResult out;
    out.subgoal_ok = flags_from_progress(task, done);
    out.success = done == task.subgoals.size();
    out.rmse = tracker.finish();
    out.length = static_cast<int>(std::min<int64_t>(ticks, task.time_limit));
    return out;
}

EvalReport evaluate(const rtcsched::ChunkPolicy& policy, const TaskSpec& task,
                    const rtcsched::SchedulerConfig& sched, int trials, uint64_t seed,
                    const PlantLimits& limits) {
    task.validate();
    sched.validate();
    require(trials > 0, "evaluation needs at least one trial");
    require(task.time_limit >= sched.horizon, "task time limit shorter than one chunk");
    require(sched.mode == rtcsched::SchedMode::virtual_clock,
            "evaluation runs on the virtual clock");

    const double dt = 1.0 / sched.control_rate;

    EvalReport report;
    report.trials = trials;
    report.subgoal_successes.assign(task.subgoals.size(), 0);

    for (int trial = 0; trial < trials; ++trial) {
        Rng rng(mix_seed(seed, static_cast<uint64_t>(trial)));
        PlantState state = neutral_state();
        for (auto& q : state.upper) {
            q = std::clamp(q + 0.02 * rng.normal(), limits.joint_min, limits.joint_max);
        }
        state.height = std::clamp(state.height + 0.01 * rng.normal(),
                                  limits.height_min, limits.height_max);

        size_t done = 0;
        Tracker tracker;

        rtcsched::SchedulerConfig cfg = sched;
        if (cfg.latency.kind == rtcsched::LatencySpec::Kind::seeded) {
            cfg.latency.seed = mix_seed(seed, 0x5Cu ^ static_cast<uint64_t>(trial));
        }

        rtcsched::PlantHook hook;
        hook.observe = [&](int64_t) {
            actioncore::Observation obs;
            obs.proprio = proprio_from_state(state);
            obs.context = context_feature(state, task, done);
            obs.task_id = task.task_id;
            return obs;
        };
        hook.apply = [&](int64_t, const actioncore::JointAction& cmd, bool) {
            state = step_plant(state, cmd, dt, limits);
            tracker.add(state, cmd);
            advance_progress(state, task, done);
        };

        rtcsched::run_scheduler(cfg, policy, hook, task.time_limit);

        RolloutResult r;
        r.subgoal_ok = flags_from_progress(task, done);
        r.success = done == task.subgoals.size();
        r.rmse = tracker.finish();
        r.length = static_cast<int>(task.time_limit);
        r.validate();

        if (r.success) ++report.successes;
        for (size_t i = 0; i < r.subgoal_ok.size(); ++i) {
            if (r.subgoal_ok[i]) ++report.subgoal_successes[i];
        }
        report.rollouts.push_back(std::move(r));
    }
    return report;
}

}  // namespace psi::simplant
