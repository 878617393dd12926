#include <psi/simplant/plant.hpp>

#include <algorithm>
#include <cmath>

#include <psi/common/errors.hpp>

namespace psi::simplant {

using actioncore::JointAction;
using actioncore::kUpperBodyDims;

namespace {

constexpr double kLegLength = 0.8;    // hip-to-ankle at full extension, m
constexpr double kStanceRoll = 0.02;  // resting hip/ankle roll split, rad

double slew(double value, double target, double max_step) {
    double d = target - value;
    if (std::abs(d) <= max_step) return target;
    return value + std::copysign(max_step, d);
}

double relax(double value, double target, double dt, double tau) {
    return target + (value - target) * std::exp(-dt / tau);
}

}  // namespace

std::array<double, kLowerDims> system0_lower(double height, const std::array<double, 3>& torso) {
    std::array<double, kLowerDims> out{};
    out[0] = torso[0];
    out[1] = torso[1];
    out[2] = torso[2];
    // crouch angle that places the hip at the commanded height with a flat foot
    double crouch = std::acos(std::clamp(height / kLegLength, 0.2, 1.0));
    for (int leg = 0; leg < 2; ++leg) {
        double side = leg == 0 ? 1.0 : -1.0;
        size_t base = static_cast<size_t>(3 + 6 * leg);
        out[base + 0] = 0.0;                          // hip yaw
        out[base + 1] = side * kStanceRoll;           // hip roll
        out[base + 2] = -crouch - 0.5 * torso[1];     // hip pitch
        out[base + 3] = 2.0 * crouch;                 // knee
        out[base + 4] = -crouch - 0.5 * torso[1];     // ankle pitch
        out[base + 5] = -side * kStanceRoll - torso[0];  // ankle roll
    }
    return out;
}

PlantState neutral_state() {
    PlantState s;
    s.lower = system0_lower(s.height, s.torso);
    return s;
}

actioncore::ProprioState proprio_from_state(const PlantState& s) {
    actioncore::ProprioState p;
    for (int i = 0; i < kUpperBodyDims; ++i) p[i] = s.upper[static_cast<size_t>(i)];
    p[kUpperBodyDims] = s.height;
    p[kUpperBodyDims + 1] = s.torso[0];
    p[kUpperBodyDims + 2] = s.torso[1];
    p[kUpperBodyDims + 3] = s.torso[2];
    return p;
}

PlantState step_plant(const PlantState& state, const JointAction& action, double dt,
                      const PlantLimits& limits) {
    require(dt > 0.0, "dt must be positive");
    for (double v : action.v)
        require_data(std::isfinite(v), "non-finite action");

    PlantState next = state;
    next.time = state.time + dt;

    for (int i = 0; i < kUpperBodyDims; ++i) {
        double target = std::clamp(action[i], limits.joint_min, limits.joint_max);
        next.upper[static_cast<size_t>(i)] =
            slew(state.upper[static_cast<size_t>(i)], target, limits.joint_rate * dt);
    }

    // translate at the pre-step heading
    double vx = action[actioncore::kVxIndex];
    double vy = action[actioncore::kVyIndex];
    next.x = state.x + (vx * std::cos(state.yaw) - vy * std::sin(state.yaw)) * dt;
    next.y = state.y + (vx * std::sin(state.yaw) + vy * std::cos(state.yaw)) * dt;
    next.yaw = slew(state.yaw, action[actioncore::kPyawIndex], limits.yaw_rate * dt) +
               action[actioncore::kVyawIndex] * dt;

    double h_cmd = std::clamp(action[actioncore::kBaseHeightIndex], limits.height_min,
                              limits.height_max);
    next.height = relax(state.height, h_cmd, dt, limits.tracking_tau);
    for (int i = 0; i < 3; ++i) {
        double t_cmd = std::clamp(action[actioncore::kTorsoRpyOffset + i], limits.torso_min,
                                  limits.torso_max);
        next.torso[static_cast<size_t>(i)] =
            relax(state.torso[static_cast<size_t>(i)], t_cmd, dt, limits.tracking_tau);
    }
    next.lower = system0_lower(next.height, next.torso);
    return next;
}

}  // namespace psi::simplant
