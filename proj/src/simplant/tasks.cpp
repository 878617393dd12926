#include <psi/simplant/tasks.hpp>

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include <psi/common/errors.hpp>
#include <psi/common/rng.hpp>

namespace psi::simplant {

using actioncore::kUpperBodyDims;
using nlohmann::ordered_json;

namespace {

double ang_diff(double a, double b) {
    double d = a - b;
    while (d > M_PI) d -= 2.0 * M_PI;
    while (d < -M_PI) d += 2.0 * M_PI;
    return d;
}

}  // namespace

void TaskSpec::validate() const {
    require(joint_tol > 0.0 && base_tol > 0.0 && yaw_tol > 0.0 && height_tol > 0.0,
            "task tolerances must be positive");
    require(time_limit >= 1, "task time limit must be at least one tick");
    require(!subgoals.empty(), "task needs at least one subgoal");
    PlantLimits lim;
    for (const SubGoal& g : subgoals) {
        if (g.kind == SubGoal::Kind::reach) {
            for (double u : g.upper)
                require(u >= lim.joint_min && u <= lim.joint_max,
                        "infeasible task: joint target outside limits");
            require(g.height >= lim.height_min && g.height <= lim.height_max,
                    "infeasible task: height target outside limits");
            for (double t : g.torso)
                require(t >= lim.torso_min && t <= lim.torso_max,
                        "infeasible task: torso target outside limits");
        }
    }
}

bool subgoal_met(const PlantState& s, const SubGoal& g, const TaskSpec& task) {
    if (g.kind == SubGoal::Kind::reach) {
        for (int i = 0; i < kUpperBodyDims; ++i)
            if (std::abs(s.upper[static_cast<size_t>(i)] - g.upper[static_cast<size_t>(i)]) >
                task.joint_tol)
                return false;
        if (std::abs(s.height - g.height) > task.height_tol) return false;
        for (int i = 0; i < 3; ++i)
            if (std::abs(s.torso[static_cast<size_t>(i)] - g.torso[static_cast<size_t>(i)]) >
                task.joint_tol)
                return false;
        return true;
    }
    return std::abs(s.x - g.dx) <= task.base_tol && std::abs(s.y - g.dy) <= task.base_tol &&
           std::abs(ang_diff(s.yaw, g.yaw)) <= task.yaw_tol;
}

void advance_progress(const PlantState& s, const TaskSpec& task, size_t& done) {
    while (done < task.subgoals.size() && subgoal_met(s, task.subgoals[done], task)) ++done;
}

std::vector<double> context_feature(const PlantState& s, const TaskSpec& task, size_t done) {
    std::vector<double> ctx(static_cast<size_t>(actioncore::kProprioDims), 0.0);
    if (done >= task.subgoals.size()) return ctx;
    const SubGoal& g = task.subgoals[done];
    if (g.kind == SubGoal::Kind::reach) {
        for (int i = 0; i < kUpperBodyDims; ++i)
            ctx[static_cast<size_t>(i)] =
                g.upper[static_cast<size_t>(i)] - s.upper[static_cast<size_t>(i)];
        ctx[28] = g.torso[0] - s.torso[0];
        ctx[29] = g.torso[1] - s.torso[1];
        ctx[30] = g.torso[2] - s.torso[2];
        ctx[31] = g.height - s.height;
    } else {
        double rx = g.dx - s.x;
        double ry = g.dy - s.y;
        ctx[28] = std::cos(s.yaw) * rx + std::sin(s.yaw) * ry;
        ctx[29] = -std::sin(s.yaw) * rx + std::cos(s.yaw) * ry;
        ctx[30] = ang_diff(g.yaw, s.yaw);
    }
    return ctx;
}

TaskSpec make_reach_task() {
    TaskSpec task;
    task.task_id = 0;
    task.name = "reach_forward";
    task.time_limit = 300;

    SubGoal lift;
    lift.kind = SubGoal::Kind::reach;
    for (int i = 0; i < 14; ++i) lift.upper[static_cast<size_t>(i)] = 0.2;  // curl the hands
    for (int i = 14; i < kUpperBodyDims; ++i)
        lift.upper[static_cast<size_t>(i)] = 0.4;  // raise the arms
    lift.height = 0.85;

    SubGoal carry;
    carry.kind = SubGoal::Kind::displace;
    carry.dx = 0.3;
    carry.dy = 0.0;
    carry.yaw = 0.0;

    SubGoal rest;
    rest.kind = SubGoal::Kind::reach;
    rest.height = kStandingHeight;

    task.subgoals = {lift, carry, rest};
    return task;
}

TaskSpec make_task(int task_id, uint64_t seed) {
    Rng rng(mix_seed(seed, 0xA5));
    TaskSpec task;
    task.task_id = task_id;
    task.name = "synthetic_" + std::to_string(task_id);
    int count = rng.uniform_int(3, 5);
    double cx = 0.0, cy = 0.0, cyaw = 0.0;
    for (int k = 0; k < count; ++k) {
        SubGoal g;
        if (k % 2 == 0) {
            g.kind = SubGoal::Kind::reach;
            for (int i = 0; i < kUpperBodyDims; ++i)
                g.upper[static_cast<size_t>(i)] = rng.uniform(-0.5, 0.5);
            g.height = rng.uniform(0.6, 0.95);
            g.torso[1] = rng.uniform(-0.2, 0.2);
        } else {
            g.kind = SubGoal::Kind::displace;
            cx += rng.uniform(-0.4, 0.4);
            cy += rng.uniform(-0.4, 0.4);
            cyaw += rng.uniform(-0.6, 0.6);
            g.dx = cx;
            g.dy = cy;
            g.yaw = cyaw;
        }
        task.subgoals.push_back(g);
    }
    task.time_limit = 200 + 150 * count;
    return task;
}

std::string task_to_json(const TaskSpec& task) {
    ordered_json j;
    j["task_id"] = task.task_id;
    j["name"] = task.name;
    j["time_limit"] = task.time_limit;
    j["tolerances"] = {{"joint", task.joint_tol},
                       {"base", task.base_tol},
                       {"yaw", task.yaw_tol},
                       {"height", task.height_tol}};
    j["subgoals"] = ordered_json::array();
    for (const SubGoal& g : task.subgoals) {
        ordered_json s;
        if (g.kind == SubGoal::Kind::reach) {
            s["kind"] = "reach";
            s["upper"] = g.upper;
            s["height"] = g.height;
            s["torso"] = g.torso;
        } else {
            s["kind"] = "displace";
            s["dx"] = g.dx;
            s["dy"] = g.dy;
            s["yaw"] = g.yaw;
        }
        j["subgoals"].push_back(std::move(s));
    }
    return j.dump(2) + "\n";
}

TaskSpec task_from_json(const std::string& body) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception&) {
        throw DataError("task spec is not valid JSON");
    }
    try {
        TaskSpec task;
        task.task_id = j.at("task_id").get<int>();
        task.name = j.value("name", std::string{});
        task.time_limit = j.at("time_limit").get<int>();
        const auto& tol = j.at("tolerances");
        task.joint_tol = tol.at("joint").get<double>();
        task.base_tol = tol.at("base").get<double>();
        task.yaw_tol = tol.at("yaw").get<double>();
        task.height_tol = tol.at("height").get<double>();
        for (const auto& s : j.at("subgoals")) {
            SubGoal g;
            std::string kind = s.at("kind").get<std::string>();
            if (kind == "reach") {
                g.kind = SubGoal::Kind::reach;
                auto upper = s.at("upper").get<std::vector<double>>();
                require_data(upper.size() == static_cast<size_t>(kUpperBodyDims),
                             "task spec: reach target must have 28 joints");
                std::copy(upper.begin(), upper.end(), g.upper.begin());
                g.height = s.at("height").get<double>();
                auto torso = s.at("torso").get<std::vector<double>>();
                require_data(torso.size() == 3, "task spec: torso target must have 3 angles");
                std::copy(torso.begin(), torso.end(), g.torso.begin());
            } else if (kind == "displace") {
                g.kind = SubGoal::Kind::displace;
                g.dx = s.at("dx").get<double>();
                g.dy = s.at("dy").get<double>();
                g.yaw = s.at("yaw").get<double>();
            } else {
                throw DataError("task spec: unknown subgoal kind: " + kind);
            }
            task.subgoals.push_back(g);
        }
        task.validate();
        return task;
    } catch (const nlohmann::json::exception&) {
        throw DataError("task spec is missing required fields");
    }
}

}  // namespace psi::simplant
