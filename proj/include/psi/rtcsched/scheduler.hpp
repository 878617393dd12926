#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <psi/actioncore/types.hpp>
#include <psi/flowexpert/mat.hpp>

namespace psi::rtcsched {

using flowexpert::Mat;

enum class SchedMode : uint8_t {
    virtual_clock = 0,  ///< single deterministic interleaving, simulated time
    realtime = 1,       ///< control loop and inference worker on real threads
};

enum class SchedStrategy : uint8_t {
    async_rtc = 0,      ///< overlap inference with execution, inpaint prefix
    sync_baseline = 1,  ///< block at chunk end, fresh chunk from scratch
};

const char* sched_mode_name(SchedMode m);
SchedMode sched_mode_from_name(const std::string& name);
const char* sched_strategy_name(SchedStrategy s);
SchedStrategy sched_strategy_from_name(const std::string& name);

/// Inference latency model. `fixed` charges the same wall time to every
/// call; `seeded` draws uniformly from [min_ms, max_ms] with its own rng
/// stream so runs are reproducible.
struct LatencySpec {
    enum class Kind : uint8_t { fixed = 0, seeded = 1 };

    Kind kind = Kind::fixed;
    double fixed_ms = 160.0;
    double min_ms = 0.0;
    double max_ms = 0.0;
    uint64_t seed = 0;

    void validate() const;
};

struct SchedulerConfig {
    double control_rate = 30.0;   ///< chunk-step execution rate, Hz
    double lowlevel_rate = 60.0;  ///< downstream command rate, Hz
    int horizon = 16;             ///< actions per chunk
    int s_min = 8;                ///< earliest chunk step at which to re-plan
    LatencySpec latency;
    SchedMode mode = SchedMode::virtual_clock;
    SchedStrategy strategy = SchedStrategy::async_rtc;

    double tick_ms() const { return 1000.0 / control_rate; }
    void validate() const;
};

/// One deployed action chunk. Rows [0, committed_len) duplicate, bit for
/// bit, actions already promised to the plant while this chunk was being
/// generated; execution of fresh content starts at row committed_len.
struct ActionChunk {
    Mat actions;                ///< horizon x 36
    int64_t origin_tick = 0;    ///< tick at which row 0 is (was) scheduled
    int committed_len = 0;

    void validate(int horizon) const;
};

struct TickRecord {
    int64_t tick = 0;
    int chunk_id = 0;
    int action_index = 0;  ///< row executed this tick (held row when gap)
    bool gap = false;      ///< true when no fresh action was available
};

struct SwitchRecord {
    int64_t tick = 0;        ///< first tick the incoming chunk served
    int chunk_id = 0;
    int latency_ticks = 0;   ///< measured inference latency, in ticks
    int prefix_len = 0;      ///< committed_len of the incoming chunk
    bool overrun = false;    ///< previous chunk ran out before this arrived
};

struct RtcTrace {
    std::vector<TickRecord> ticks;
    std::vector<SwitchRecord> switches;
    int64_t gap_ticks = 0;
    int chunks_emitted = 0;
    double mean_divergence = 0.0;
    double max_divergence = 0.0;
};

struct ContinuityMetrics {
    double mean_divergence = 0.0;
    double max_divergence = 0.0;
    int boundaries = 0;
};

/// Per-dimension-normalized L2 step between the last action executed from
/// the outgoing chunk and the first action executed from the incoming one,
/// at every chunk boundary in the trace. Throws DataError("no chunk
/// boundary") when the trace never switched chunks.
ContinuityMetrics continuity_metrics(const RtcTrace& trace,
                                     const std::vector<ActionChunk>& chunks);

/// The chunk source. Receives the observation captured at the re-plan tick
/// and the committed prefix (possibly empty) that will execute while the
/// call is in flight; returns a horizon x 36 chunk. The scheduler enforces
/// the prefix on the returned chunk regardless of what the policy did with
/// it.
using ChunkPolicy =
    std::function<Mat(const actioncore::Observation&, const Mat& prefix)>;

/// Plant-side callbacks. `observe` is called once per tick before anything
/// else; `apply` receives the action executed that tick and whether it was
/// a hold (gap). Both are invoked from the control actor only.
struct PlantHook {
    std::function<actioncore::Observation(int64_t tick)> observe;
    std::function<void(int64_t tick, const actioncore::JointAction& a, bool gap)> apply;
};

struct SchedulerResult {
    RtcTrace trace;
    std::vector<ActionChunk> chunks;
};

/// Runs the control loop for `ticks` ticks. An initial chunk is generated
/// from the tick-0 observation before the loop starts (its latency is not
/// charged against the run). Virtual-clock mode is single-threaded and
/// byte-deterministic; realtime mode runs inference on a worker thread and
/// honours the same scheduling contract on the wall clock.
SchedulerResult run_scheduler(const SchedulerConfig& config,
                              const ChunkPolicy& policy,
                              const PlantHook& hook,
                              int64_t ticks);

}  // namespace psi::rtcsched
