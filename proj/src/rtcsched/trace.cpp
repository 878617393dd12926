#include <psi/rtcsched/trace.hpp>

#include <cstdint>
#include <fstream>

#include <json.hpp>

#include <psi/common/errors.hpp>

namespace psi::rtcsched {

using nlohmann::ordered_json;

std::string trace_to_jsonl(const RtcTrace& trace) {
    std::string out;
    {
        ordered_json schema;
        schema["type"] = "schema";
        schema["version"] = kTraceSchemaVersion;
        out += schema.dump();
        out += '\n';
    }
    size_t si = 0;
    auto flush_switches = [&](int64_t up_to_tick) {
        while (si < trace.switches.size() && trace.switches[si].tick <= up_to_tick) {
            const SwitchRecord& s = trace.switches[si++];
            ordered_json j;
            j["type"] = "switch";
            j["tick"] = s.tick;
            j["chunk"] = s.chunk_id;
            j["latency_ticks"] = s.latency_ticks;
            j["prefix"] = s.prefix_len;
            j["overrun"] = s.overrun;
            out += j.dump();
            out += '\n';
        }
    };
    for (const TickRecord& t : trace.ticks) {
        flush_switches(t.tick);
        ordered_json j;
        j["type"] = "tick";
        j["tick"] = t.tick;
        j["chunk"] = t.chunk_id;
        j["index"] = t.action_index;
        j["gap"] = t.gap;
        out += j.dump();
        out += '\n';
    }
    flush_switches(INT64_MAX);
    return out;
}

std::string metrics_to_json(const RtcTrace& trace) {
    ordered_json j;
    j["schema_version"] = kTraceSchemaVersion;
    j["ticks"] = trace.ticks.size();
    j["gap_ticks"] = trace.gap_ticks;
    j["chunks_emitted"] = trace.chunks_emitted;
    j["switches"] = trace.switches.size();
    j["mean_divergence"] = trace.mean_divergence;
    j["max_divergence"] = trace.max_divergence;
    return j.dump() + "\n";
}

namespace {

void atomic_write(const std::filesystem::path& path, const std::string& body) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw DataError("cannot open for writing: " + tmp.string());
        f.write(body.data(), static_cast<std::streamsize>(body.size()));
        if (!f) throw DataError("short write: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace

void write_trace_jsonl(const std::filesystem::path& path, const RtcTrace& trace) {
    atomic_write(path, trace_to_jsonl(trace));
}

void write_metrics_json(const std::filesystem::path& path, const RtcTrace& trace) {
    atomic_write(path, metrics_to_json(trace));
}

}  // namespace psi::rtcsched
