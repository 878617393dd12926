#include <psi/rtcsched/scheduler.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <mutex>
#include <thread>
#include <utility>

#include <psi/common/errors.hpp>
#include <psi/common/rng.hpp>
#include <psi/rtcsched/chunkbuf.hpp>

namespace psi::rtcsched {


const char* sched_mode_name(SchedMode m) {
    return m == SchedMode::virtual_clock ? "virtual_clock" : "realtime";
}

SchedMode sched_mode_from_name(const std::string& name) {
    if (name == "virtual_clock") return SchedMode::virtual_clock;
    if (name == "realtime") return SchedMode::realtime;
    throw ConfigError("unknown scheduler mode: " + name);
}

const char* sched_strategy_name(SchedStrategy s) {
    return s == SchedStrategy::async_rtc ? "async_rtc" : "sync_baseline";
}

SchedStrategy sched_strategy_from_name(const std::string& name) {
    if (name == "async_rtc") return SchedStrategy::async_rtc;
    if (name == "sync_baseline") return SchedStrategy::sync_baseline;
    throw ConfigError("unknown scheduler strategy: " + name);
}

void LatencySpec::validate() const {
    if (kind == Kind::fixed) {
        if (!(fixed_ms >= 0.0)) throw ConfigError("latency must be non-negative");
    } else {
        if (!(min_ms >= 0.0) || !(max_ms >= min_ms))
            throw ConfigError("latency range is invalid");
    }
}

void SchedulerConfig::validate() const {
    if (!(control_rate > 0.0)) throw ConfigError("control rate must be positive");
    if (!(lowlevel_rate >= control_rate))
        throw ConfigError("lowlevel rate must be at least the control rate");
    if (horizon < 2) throw ConfigError("horizon must be at least 2");
    if (s_min <= 0 || s_min >= horizon)
        throw ConfigError("s_min must lie strictly between 0 and the horizon");
    latency.validate();
}

void ActionChunk::validate(int horizon) const {
    if (actions.rows != horizon || actions.cols != actioncore::kJointDims)
        throw ConfigError("chunk has wrong shape");
    if (committed_len < 0 || committed_len >= horizon)
        throw ConfigError("committed length out of range");
}

namespace {

// Whole ticks an inference occupies. A call that starts during tick t can
// never be adopted before tick t+1, hence the floor of one.
int latency_to_ticks(double ms, double control_rate) {
    int t = static_cast<int>(std::ceil(ms * control_rate / 1000.0 - 1e-9));
    return std::max(t, 1);
}

double draw_latency_ms(const LatencySpec& spec, Rng& rng) {
    if (spec.kind == LatencySpec::Kind::fixed) return spec.fixed_ms;
    return rng.uniform(spec.min_ms, spec.max_ms);
}

void check_chunk_shape(const Mat& m, int horizon) {
    if (m.rows != horizon || m.cols != actioncore::kJointDims)
        throw ConfigError("policy chunk must be horizon x 36");
}

actioncore::JointAction row_action(const Mat& m, int row) {
    actioncore::JointAction a;
    for (int c = 0; c < actioncore::kJointDims; ++c) a[c] = m.at(row, c);
    return a;
}

Mat copy_rows(const Mat& m, int first, int count) {
    Mat out(count, m.cols);
    for (int r = 0; r < count; ++r)
        for (int c = 0; c < m.cols; ++c) out.at(r, c) = m.at(first + r, c);
    return out;
}

void pin_rows(Mat& dst, const Mat& prefix) {
    for (int r = 0; r < prefix.rows; ++r)
        for (int c = 0; c < prefix.cols; ++c) dst.at(r, c) = prefix.at(r, c);
}

void fill_aggregates(SchedulerResult& out) {
    RtcTrace& tr = out.trace;
    tr.chunks_emitted = static_cast<int>(out.chunks.size());
    bool boundary = false;
    for (const SwitchRecord& s : tr.switches)
        if (s.chunk_id >= 1) boundary = true;
    if (boundary) {
        ContinuityMetrics m = continuity_metrics(tr, out.chunks);
        tr.mean_divergence = m.mean_divergence;
        tr.max_divergence = m.max_divergence;
    }
}

SchedulerResult run_virtual(const SchedulerConfig& cfg, const ChunkPolicy& policy,
                            const PlantHook& hook, int64_t ticks) {
    const int H = cfg.horizon;
    Rng lat_rng(mix_seed(cfg.latency.seed, 0x5C));

    SchedulerResult out;
    RtcTrace& tr = out.trace;

    {
        actioncore::Observation obs = hook.observe(0);
        Mat first = policy(obs, Mat(0, 0));
        check_chunk_shape(first, H);
        int lam0 = latency_to_ticks(draw_latency_ms(cfg.latency, lat_rng), cfg.control_rate);
        out.chunks.push_back(ActionChunk{std::move(first), 0, 0});
        tr.switches.push_back(SwitchRecord{0, 0, lam0, 0, false});
    }

    bool in_flight = false;
    int64_t ready_at = 0;
    int pending_lam = 0;
    ActionChunk pending;
    int cur = 0;

    for (int64_t t = 0; t < ticks; ++t) {
        if (in_flight && t >= ready_at) {
            int prefix_len = pending.committed_len;
            bool overrun = prefix_len < pending_lam;
            out.chunks.push_back(std::move(pending));
            cur = static_cast<int>(out.chunks.size()) - 1;
            tr.switches.push_back(SwitchRecord{t, cur, pending_lam, prefix_len, overrun});
            in_flight = false;
        }

        actioncore::Observation obs = hook.observe(t);
        const ActionChunk& chunk = out.chunks[static_cast<size_t>(cur)];
        int idx = static_cast<int>(t - chunk.origin_tick);

        bool replan = !in_flight &&
                      (cfg.strategy == SchedStrategy::async_rtc ? idx >= cfg.s_min
                                                                : idx >= H);
        if (replan) {
            int lam = latency_to_ticks(draw_latency_ms(cfg.latency, lat_rng), cfg.control_rate);
            int p = 0;
            Mat prefix(0, actioncore::kJointDims);
            if (cfg.strategy == SchedStrategy::async_rtc) {
                p = std::clamp(std::min(lam, H - idx), 0, H - 1);
                prefix = copy_rows(chunk.actions, idx, p);
            }
            Mat next = policy(obs, prefix);
            check_chunk_shape(next, H);
            pin_rows(next, prefix);
            ready_at = t + lam;
            pending.actions = std::move(next);
            pending.committed_len = p;
            pending.origin_tick = ready_at - p;
            pending_lam = lam;
            in_flight = true;
        }

        bool gap = idx >= H;
        int row = gap ? H - 1 : idx;
        if (hook.apply) hook.apply(t, row_action(chunk.actions, row), gap);
        tr.ticks.push_back(TickRecord{t, cur, row, gap});
        if (gap) ++tr.gap_ticks;
    }

    fill_aggregates(out);
    return out;
}

struct InferRequest {
    actioncore::Observation obs;
    Mat prefix;
    double latency_ms = 0.0;
    int prefix_len = 0;
    int64_t snap_tick = 0;
};

struct InferResult {
    Mat actions;
    int prefix_len = 0;
    int64_t snap_tick = 0;
};

SchedulerResult run_realtime(const SchedulerConfig& cfg, const ChunkPolicy& policy,
                             const PlantHook& hook, int64_t ticks) {
    using clock = std::chrono::steady_clock;
    const int H = cfg.horizon;
    Rng lat_rng(mix_seed(cfg.latency.seed, 0x5C));

    SchedulerResult out;
    RtcTrace& tr = out.trace;

    ExchangeCell<InferRequest> requests;
    ExchangeCell<InferResult> results;
    std::atomic<bool> stop{false};
    std::mutex wake_mu;
    std::condition_variable wake_cv;

    std::thread worker([&] {
        InferRequest req;
        while (!stop.load(std::memory_order_acquire)) {
            {
                std::unique_lock<std::mutex> lk(wake_mu);
                wake_cv.wait_for(lk, std::chrono::milliseconds(1));
            }
            if (!requests.try_read(req)) continue;
            auto begun = clock::now();
            Mat next = policy(req.obs, req.prefix);
            check_chunk_shape(next, H);
            pin_rows(next, req.prefix);
            auto due = begun + std::chrono::duration<double, std::milli>(req.latency_ms);
            std::this_thread::sleep_until(due);
            results.publish(InferResult{std::move(next), req.prefix_len, req.snap_tick});
        }
    });

    {
        actioncore::Observation obs = hook.observe(0);
        Mat first = policy(obs, Mat(0, 0));
        check_chunk_shape(first, H);
        int lam0 = latency_to_ticks(draw_latency_ms(cfg.latency, lat_rng), cfg.control_rate);
        out.chunks.push_back(ActionChunk{std::move(first), 0, 0});
        tr.switches.push_back(SwitchRecord{0, 0, lam0, 0, false});
    }

    bool in_flight = false;
    int cur = 0;
    bool last_tick_gap = false;
    const auto period = std::chrono::duration<double>(1.0 / cfg.control_rate);
    const auto start = clock::now();

    for (int64_t t = 0; t < ticks; ++t) {
        InferResult res;
        if (in_flight && results.try_read(res)) {
            int e = static_cast<int>(t - res.snap_tick);
            int64_t origin = e >= res.prefix_len ? t - res.prefix_len : res.snap_tick;
            out.chunks.push_back(ActionChunk{std::move(res.actions), origin, res.prefix_len});
            cur = static_cast<int>(out.chunks.size()) - 1;
            tr.switches.push_back(SwitchRecord{t, cur, e, res.prefix_len, last_tick_gap});
            in_flight = false;
        }

        actioncore::Observation obs = hook.observe(t);
        const ActionChunk& chunk = out.chunks[static_cast<size_t>(cur)];
        int idx = static_cast<int>(t - chunk.origin_tick);

        bool replan = !in_flight &&
                      (cfg.strategy == SchedStrategy::async_rtc ? idx >= cfg.s_min
                                                                : idx >= H);
        if (replan) {
            double ms = draw_latency_ms(cfg.latency, lat_rng);
            int lam = latency_to_ticks(ms, cfg.control_rate);
            int p = 0;
            Mat prefix(0, actioncore::kJointDims);
            if (cfg.strategy == SchedStrategy::async_rtc) {
                p = std::clamp(std::min(lam, H - idx), 0, H - 1);
                prefix = copy_rows(chunk.actions, idx, p);
            }
            requests.publish(InferRequest{obs, std::move(prefix), ms, p, t});
            wake_cv.notify_one();
            in_flight = true;
        }

        bool gap = idx >= H;
        int row = gap ? H - 1 : idx;
        if (hook.apply) hook.apply(t, row_action(chunk.actions, row), gap);
        tr.ticks.push_back(TickRecord{t, cur, row, gap});
        if (gap) ++tr.gap_ticks;
        last_tick_gap = gap;

        std::this_thread::sleep_until(
            start + std::chrono::duration_cast<clock::duration>(period * (t + 1)));
    }

    stop.store(true, std::memory_order_release);
    wake_cv.notify_one();
    worker.join();

    fill_aggregates(out);
    return out;
}

}  // namespace

ContinuityMetrics continuity_metrics(const RtcTrace& trace,
                                     const std::vector<ActionChunk>& chunks) {
    ContinuityMetrics m;
    if (trace.ticks.empty()) throw DataError("no chunk boundary");
    int64_t first_tick = trace.ticks.front().tick;
    double sum = 0.0;
    for (const SwitchRecord& s : trace.switches) {
        if (s.chunk_id < 1) continue;
        int64_t pos = s.tick - first_tick;
        if (pos <= 0 || pos >= static_cast<int64_t>(trace.ticks.size())) continue;
        const TickRecord& prev = trace.ticks[static_cast<size_t>(pos - 1)];
        const TickRecord& next = trace.ticks[static_cast<size_t>(pos)];
        const Mat& old_a = chunks[static_cast<size_t>(prev.chunk_id)].actions;
        const Mat& new_a = chunks[static_cast<size_t>(next.chunk_id)].actions;
        double sq = 0.0;
        for (int c = 0; c < old_a.cols; ++c) {
            double d = new_a.at(next.action_index, c) - old_a.at(prev.action_index, c);
            sq += d * d;
        }
        double div = std::sqrt(sq / old_a.cols);
        sum += div;
        m.max_divergence = std::max(m.max_divergence, div);
        ++m.boundaries;
    }
    if (m.boundaries == 0) throw DataError("no chunk boundary");
    m.mean_divergence = sum / m.boundaries;
    return m;
}

SchedulerResult run_scheduler(const SchedulerConfig& config, const ChunkPolicy& policy,
                              const PlantHook& hook, int64_t ticks) {
    config.validate();
    if (!policy) throw ConfigError("scheduler needs a policy");
    if (!hook.observe) throw ConfigError("plant hook must provide observe");
    if (ticks < config.horizon)
        throw ConfigError("run must cover at least one horizon of ticks");
    if (config.mode == SchedMode::virtual_clock)
        return run_virtual(config, policy, hook, ticks);
    return run_realtime(config, policy, hook, ticks);
}

}  // namespace psi::rtcsched
