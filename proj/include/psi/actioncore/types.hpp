#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "psi/common/errors.hpp"

namespace psi::actioncore {

// ---------------------------------------------------------------------------
// Fixed component layouts.
//
// Joint-space action (36 scalars):
//   [ 0,14)  q_hand   two-hand joint angles, rad
//   [14,28)  q_arm    two-arm joint angles, rad
//   [28,31)  torso_rpy roll/pitch/yaw, rad
//   [31]     h_b      base height, m
//   [32]     v_x      forward velocity, m/s
//   [33]     v_y      lateral velocity, m/s
//   [34]     v_yaw    yaw rate, rad/s
//   [35]     p_yaw    target yaw, rad
//
// Task-space action (48 scalars): left then right, each side
//   [0,3)   wrist position, m        (head-camera frame)
//   [3,9)   wrist 6D rotation        (first two rotation-matrix columns,
//                                     column-major)
//   [9,24)  five 3D fingertip positions: thumb, index, middle, ring, pinky
// ---------------------------------------------------------------------------

inline constexpr int kJointDims = 36;
inline constexpr int kTaskDims = 48;
inline constexpr int kProprioDims = 32;
inline constexpr int kUpperBodyDims = 28;

inline constexpr int kHandOffset = 0;
inline constexpr int kArmOffset = 14;
inline constexpr int kTorsoRpyOffset = 28;
inline constexpr int kBaseHeightIndex = 31;
inline constexpr int kVxIndex = 32;
inline constexpr int kVyIndex = 33;
inline constexpr int kVyawIndex = 34;
inline constexpr int kPyawIndex = 35;

inline constexpr int kTaskSideDims = 24;
inline constexpr int kWristPosOffset = 0;
inline constexpr int kWristRotOffset = 3;
inline constexpr int kFingertipOffset = 9;

/// 36-DoF joint-space action with the fixed layout above.
struct JointAction {
    std::array<double, kJointDims> v{};

    double& operator[](int i) { return v[static_cast<size_t>(i)]; }
    double operator[](int i) const { return v[static_cast<size_t>(i)]; }

    double* hand() { return v.data() + kHandOffset; }
    double* arm() { return v.data() + kArmOffset; }
    double* torso_rpy() { return v.data() + kTorsoRpyOffset; }
    double& base_height() { return v[kBaseHeightIndex]; }
    double& v_x() { return v[kVxIndex]; }
    double& v_y() { return v[kVyIndex]; }
    double& v_yaw() { return v[kVyawIndex]; }
    double& p_yaw() { return v[kPyawIndex]; }
    double base_height() const { return v[kBaseHeightIndex]; }
    double v_x() const { return v[kVxIndex]; }
    double v_y() const { return v[kVyIndex]; }
    double v_yaw() const { return v[kVyawIndex]; }
    double p_yaw() const { return v[kPyawIndex]; }

    /// Throws DataError unless all 36 components are finite.
    void validate() const;
};

/// 48-DoF task-space action: left side then right side.
struct TaskAction {
    std::array<double, kTaskDims> v{};

    double& operator[](int i) { return v[static_cast<size_t>(i)]; }
    double operator[](int i) const { return v[static_cast<size_t>(i)]; }

    const double* left() const { return v.data(); }
    const double* right() const { return v.data() + kTaskSideDims; }

    /// Finite components; the two 3-vectors of each 6D rotation block must
    /// not both be zero.
    void validate() const;
};

/// 32 scalars: 28 joint positions (hands + arms) followed by 4 zero-padded
/// lower-body slots. The pad slots read back exactly as written.
struct ProprioState {
    std::array<double, kProprioDims> v{};

    double& operator[](int i) { return v[static_cast<size_t>(i)]; }
    double operator[](int i) const { return v[static_cast<size_t>(i)]; }

    void validate() const;
};

/// One policy observation: proprioception, a synthetic context feature vector
/// standing in for the head-camera image, and the instruction id.
struct Observation {
    ProprioState proprio;
    std::vector<double> context;
    int task_id = 0;

    void validate(int expected_context_dim) const;
};

enum class ActionSpace : uint8_t {
    joint36 = 0,
    task48 = 1,
};

inline int action_dim(ActionSpace s) {
    return s == ActionSpace::joint36 ? kJointDims : kTaskDims;
}

inline const char* action_space_name(ActionSpace s) {
    return s == ActionSpace::joint36 ? "joint36" : "task48";
}

ActionSpace action_space_from_name(const std::string& name);

/// One demonstration episode. Numeric payload is stored as float32 rows, the
/// exact representation used on disk, so dataset round trips are bit-exact.
struct Episode {
    int task_id = 0;
    double frame_rate = 30.0;
    ActionSpace space = ActionSpace::joint36;
    int context_dim = 32;
    std::vector<std::vector<float>> actions;   // frame-major, action_dim(space) wide
    std::vector<std::vector<float>> states;    // kProprioDims wide
    std::vector<std::vector<float>> contexts;  // context_dim wide

    size_t frames() const { return actions.size(); }

    /// All sequences equal length >= 1, frame_rate > 0, row widths fixed.
    void validate() const;

    bool operator==(const Episode&) const = default;
};

JointAction joint_action_from_row(const std::vector<float>& row);
std::vector<float> row_from_joint_action(const JointAction& a);

/// Pads a 28-dim upper-body action to the full 36-dim layout. The 8
/// lower-body slots get neutral values: zeros except base height.
JointAction pad_to_joint36(const std::vector<double>& upper28, double standing_height = 0.75);

/// Inverse projection of pad_to_joint36: the first 28 components.
std::vector<double> strip_to_upper28(const JointAction& a);

}  // namespace psi::actioncore
