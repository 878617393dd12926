#pragma once

#include <array>

#include <psi/actioncore/types.hpp>

namespace psi::simplant {

inline constexpr int kLowerDims = 15;
inline constexpr double kStandingHeight = 0.75;

/// Fixed kinematic parameters of the stand-in plant. The numbers are
/// documented defaults, not identified constants.
struct PlantLimits {
    double joint_rate = 2.0;      ///< upper joint slew, rad/s
    double yaw_rate = 1.5;        ///< base yaw slew toward p_yaw, rad/s
    double joint_min = -3.0;      ///< upper joint range, rad
    double joint_max = 3.0;
    double height_min = 0.3;      ///< base height range, m
    double height_max = 1.2;
    double torso_min = -1.0;      ///< torso angle range, rad
    double torso_max = 1.0;
    double tracking_tau = 0.2;    ///< height/torso first-order time constant, s
};

/// Kinematic state of the 43-DoF humanoid stand-in: 28 position-controlled
/// upper joints plus 15 lower-body joints derived from the locomotion
/// channels, a planar unicycle base, and first-order height/torso trackers.
struct PlantState {
    std::array<double, actioncore::kUpperBodyDims> upper{};
    std::array<double, kLowerDims> lower{};
    double x = 0.0;
    double y = 0.0;
    double yaw = 0.0;
    double height = kStandingHeight;
    std::array<double, 3> torso{};
    double time = 0.0;
};

/// Lower-body stand-in for the learned tracking controller: maps the base
/// height and torso angles onto 15 joints (3 waist + 2 x 6 leg). The waist
/// carries the torso angles directly; each leg folds into a flat-footed
/// crouch whose angle comes from the commanded height, with the ankle
/// compensating torso pitch.
std::array<double, kLowerDims> system0_lower(double height, const std::array<double, 3>& torso);

/// Standing rest pose: zero joints, zero base pose, standing height.
PlantState neutral_state();

/// Proprioceptive feature: 28 upper joints, base height, 3 torso angles.
actioncore::ProprioState proprio_from_state(const PlantState& s);

/// Advances the plant one step of dt seconds under a 36-dim action: upper
/// joints slew toward their commanded targets under the rate limit, the
/// base integrates unicycle kinematics at the pre-step yaw, yaw slews
/// toward p_yaw and then adds v_yaw * dt, and height/torso relax toward
/// their commands exponentially. Commands are clamped to the declared
/// ranges before tracking. Deterministic.
PlantState step_plant(const PlantState& state, const actioncore::JointAction& action, double dt,
                      const PlantLimits& limits = {});

}  // namespace psi::simplant
