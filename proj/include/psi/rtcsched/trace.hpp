#pragma once

#include <filesystem>
#include <string>

#include <psi/rtcsched/scheduler.hpp>

namespace psi::rtcsched {

inline constexpr int kTraceSchemaVersion = 1;

/// Serializes a run trace as JSON Lines: a schema record, then one record
/// per switch and per tick in time order (a switch sorts before the tick it
/// first serves). Stable field order, byte-deterministic for a given trace.
std::string trace_to_jsonl(const RtcTrace& trace);

/// Aggregate metrics as a single JSON object (one line, trailing newline).
std::string metrics_to_json(const RtcTrace& trace);

/// Atomic file variants (write to .tmp, then rename).
void write_trace_jsonl(const std::filesystem::path& path, const RtcTrace& trace);
void write_metrics_json(const std::filesystem::path& path, const RtcTrace& trace);

}  // namespace psi::rtcsched
