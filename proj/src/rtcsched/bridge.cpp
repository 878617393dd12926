#include <psi/rtcsched/bridge.hpp>

#include <cmath>

#include <psi/common/errors.hpp>

namespace psi::rtcsched {


LowLevelCommand lowlevel_command(const actioncore::JointAction& a, const System0Map& map) {
    if (!map) throw ConfigError("bridge needs a lower-body map");
    LowLevelCommand cmd;
    for (int i = 0; i < actioncore::kUpperBodyDims; ++i) cmd.upper[static_cast<size_t>(i)] = a[i];
    cmd.lower = map(a);
    return cmd;
}

std::vector<LowLevelCommand> lowlevel_bridge(const std::vector<actioncore::JointAction>& actions,
                                             double control_rate, double lowlevel_rate,
                                             const System0Map& map) {
    if (!(control_rate > 0.0)) throw ConfigError("control rate must be positive");
    if (!(lowlevel_rate >= control_rate))
        throw ConfigError("lowlevel rate must be at least the control rate");
    std::vector<LowLevelCommand> out;
    if (actions.empty()) return out;

    auto steps = static_cast<size_t>(
        std::llround(static_cast<double>(actions.size()) * lowlevel_rate / control_rate));
    out.reserve(steps);
    for (size_t j = 0; j < steps; ++j) {
        // latest control action at or before time j / lowlevel_rate
        auto idx = static_cast<size_t>(std::floor(
            static_cast<double>(j) * control_rate / lowlevel_rate + 1e-9));
        if (idx >= actions.size()) idx = actions.size() - 1;
        out.push_back(lowlevel_command(actions[idx], map));
    }
    return out;
}

}  // namespace psi::rtcsched
