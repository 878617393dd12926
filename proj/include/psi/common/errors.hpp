#pragma once

#include <stdexcept>
#include <string>

namespace psi {

/// Bad user input: configuration values, CLI flags, missing prerequisite
/// artifacts. Maps to process exit code 1.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent on-disk data (truncated files, version
/// mismatches, invariant violations on read). Maps to process exit code 1.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A broken internal invariant; indicates a bug, not bad input.
/// Maps to process exit code 2.
class InternalError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) {
        throw ConfigError(msg);
    }
}

inline void require_data(bool cond, const std::string& msg) {
    if (!cond) {
        throw DataError(msg);
    }
}

inline void require_internal(bool cond, const std::string& msg) {
    if (!cond) {
        throw InternalError(msg);
    }
}

}  // namespace psi
