#include "psi/actioncore/types.hpp"

#include <cmath>

namespace psi::actioncore {

namespace {

bool all_finite(const double* p, int n) {
    for (int i = 0; i < n; ++i) {
        if (!std::isfinite(p[i])) {
            return false;
        }
    }
    return true;
}

}  // namespace

void JointAction::validate() const {
    require_data(all_finite(v.data(), kJointDims), "joint action has non-finite component");
}

void TaskAction::validate() const {
    require_data(all_finite(v.data(), kTaskDims), "task action has non-finite component");
    for (int side = 0; side < 2; ++side) {
        const double* rot = v.data() + side * kTaskSideDims + kWristRotOffset;
        double n1 = 0.0;
        double n2 = 0.0;
        for (int i = 0; i < 3; ++i) {
            n1 += rot[i] * rot[i];
            n2 += rot[i + 3] * rot[i + 3];
        }
        require_data(n1 > 0.0 || n2 > 0.0, "task action 6D rotation block is all zero");
    }
}

void ProprioState::validate() const {
    require_data(all_finite(v.data(), kProprioDims), "proprio state has non-finite component");
}

void Observation::validate(int expected_context_dim) const {
    proprio.validate();
    require_data(static_cast<int>(context.size()) == expected_context_dim,
                 "observation context dimension mismatch");
}

ActionSpace action_space_from_name(const std::string& name) {
    if (name == "joint36") {
        return ActionSpace::joint36;
    }
    if (name == "task48") {
        return ActionSpace::task48;
    }
    throw DataError("unknown action space: " + name);
}

void Episode::validate() const {
    require_data(frame_rate > 0.0, "episode frame_rate must be positive");
    require_data(!actions.empty(), "episode must contain at least one frame");
    require_data(states.size() == actions.size() && contexts.size() == actions.size(),
                 "episode sequences must have equal length");
    const auto adim = static_cast<size_t>(action_dim(space));
    for (size_t f = 0; f < actions.size(); ++f) {
        require_data(actions[f].size() == adim, "episode action row width mismatch");
        require_data(states[f].size() == static_cast<size_t>(kProprioDims),
                     "episode state row width mismatch");
        require_data(contexts[f].size() == static_cast<size_t>(context_dim),
                     "episode context row width mismatch");
    }
}

JointAction joint_action_from_row(const std::vector<float>& row) {
    require_data(row.size() == static_cast<size_t>(kJointDims), "joint action row must have 36 values");
    JointAction a;
    for (int i = 0; i < kJointDims; ++i) {
        a[i] = static_cast<double>(row[static_cast<size_t>(i)]);
    }
    return a;
}

std::vector<float> row_from_joint_action(const JointAction& a) {
    std::vector<float> row(kJointDims);
    for (int i = 0; i < kJointDims; ++i) {
        row[static_cast<size_t>(i)] = static_cast<float>(a[i]);
    }
    return row;
}

JointAction pad_to_joint36(const std::vector<double>& upper28, double standing_height) {
    require_data(upper28.size() == static_cast<size_t>(kUpperBodyDims),
                 "upper-body action must have 28 values");
    JointAction a;
    for (int i = 0; i < kUpperBodyDims; ++i) {
        a[i] = upper28[static_cast<size_t>(i)];
    }
    a.base_height() = standing_height;
    return a;
}

std::vector<double> strip_to_upper28(const JointAction& a) {
    std::vector<double> upper(kUpperBodyDims);
    for (int i = 0; i < kUpperBodyDims; ++i) {
        upper[static_cast<size_t>(i)] = a[i];
    }
    return upper;
}

}  // namespace psi::actioncore
