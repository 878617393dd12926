#include <psi/cli/pipeline.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include <psi/actioncore/dataset.hpp>
#include <psi/actioncore/resample.hpp>
#include <psi/actioncore/rotation.hpp>
#include <psi/common/errors.hpp>
#include <psi/common/hash.hpp>
#include <psi/common/rng.hpp>
#include <psi/flowexpert/checkpoint.hpp>
#include <psi/flowexpert/flow.hpp>
#include <psi/rtcsched/trace.hpp>
#include <psi/simplant/demos.hpp>
#include <psi/simplant/evaluate.hpp>
#include <psi/simplant/tasks.hpp>

namespace psi::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int64_t kBenchTicks = 1000;
constexpr int kFlowItemStride = 4;

fs::path out_path(const PipelineConfig& cfg, const char* name) {
    return fs::path(cfg.out) / name;
}

void record_output(RunManifest& man, const fs::path& p) {
    man.outputs[p.filename().string()] = file_hash_hex(p);
}

void record_input(RunManifest& man, const fs::path& p) {
    man.inputs[p.filename().string()] = file_hash_hex(p);
}

/// Stage-ordering guard: a consumed artifact that is not on disk is a user
/// error naming the stage that should have produced it.
void require_artifact(const fs::path& p, const std::string& what) {
    require(fs::exists(p), "missing " + what);
}

std::vector<double> widen(const std::vector<float>& row) {
    return std::vector<double>(row.begin(), row.end());
}

std::vector<float> narrow(const std::vector<double>& row) {
    std::vector<float> out(row.size());
    for (size_t i = 0; i < row.size(); ++i) out[i] = static_cast<float>(row[i]);
    return out;
}

void write_report(const fs::path& p, json doc) {
    doc["schema_version"] = kReportSchemaVersion;
    atomic_write_text(p, doc.dump(2) + "\n");
}

// --- synthetic end-effector geometry ------------------------------------

actioncore::Mat3 rot_x(double a) {
    double c = std::cos(a), s = std::sin(a);
    return {1, 0, 0, 0, c, -s, 0, s, c};
}

actioncore::Mat3 rot_y(double a) {
    double c = std::cos(a), s = std::sin(a);
    return {c, 0, s, 0, 1, 0, -s, 0, c};
}

actioncore::Mat3 rot_z(double a) {
    double c = std::cos(a), s = std::sin(a);
    return {c, -s, 0, s, c, 0, 0, 0, 1};
}

actioncore::Mat3 mul3(const actioncore::Mat3& a, const actioncore::Mat3& b) {
    actioncore::Mat3 r{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) r[size_t(3 * i + j)] += a[size_t(3 * i + k)] * b[size_t(3 * k + j)];
    return r;
}

// --- normalization plumbing ----------------------------------------------

actioncore::NormStats fit_action_stats(const std::vector<actioncore::Episode>& episodes) {
    require_data(!episodes.empty(), "cannot fit normalization on an empty corpus");
    size_t dims = episodes.front().actions.front().size();
    std::vector<std::vector<double>> per_dim(dims);
    for (const auto& ep : episodes)
        for (const auto& row : ep.actions)
            for (size_t d = 0; d < dims; ++d) per_dim[d].push_back(double(row[d]));
    return actioncore::fit_quantile_stats(per_dim);
}

/// DCT coefficients of values in [-1, 1] can exceed the quantizer range by
/// up to sqrt(2 * horizon); chunk values are shrunk by that factor before
/// encoding and re-expanded after decoding. Identity at horizon 1.
double chunk_scale(int horizon) {
    return horizon == 1 ? 1.0 : 1.0 / std::sqrt(2.0 * horizon);
}

/// Flattened [step][dim] normalized window of `horizon` frames starting at
/// `start`, scaled into the tokenizer's input range.
std::vector<double> chunk_values(const actioncore::Episode& ep, const actioncore::NormStats& stats,
                                 const std::set<int>& pads, size_t start, int horizon) {
    double scale = chunk_scale(horizon);
    std::vector<double> flat;
    flat.reserve(size_t(horizon) * ep.actions.front().size());
    for (int s = 0; s < horizon; ++s) {
        auto norm = actioncore::normalize(widen(ep.actions[start + size_t(s)]), stats, pads);
        for (double v : norm) flat.push_back(v * scale);
    }
    return flat;
}

// --- config mapping --------------------------------------------------------

std::vector<std::string> task_refs(const PipelineConfig& cfg) {
    std::vector<std::string> refs{cfg.simplant.task};
    refs.insert(refs.end(), cfg.simplant.extra_tasks.begin(), cfg.simplant.extra_tasks.end());
    return refs;
}

int task_count_for(const PipelineConfig& cfg) {
    int max_id = 0;
    for (const auto& ref : task_refs(cfg)) max_id = std::max(max_id, task_id_of(ref));
    return std::max(4, max_id + 1);
}

flowexpert::ExpertConfig expert_config_from(const PipelineConfig& cfg, int vocab) {
    const auto& fx = cfg.flowexpert;
    flowexpert::ExpertConfig ec;
    ec.variant = flowexpert::variant_from_name(fx.variant);
    ec.width = fx.width;
    ec.blocks = fx.blocks;
    ec.heads = fx.heads;
    ec.vl_tokens = fx.vl_tokens;
    ec.horizon = fx.horizon;
    ec.action_dims = actioncore::kJointDims;
    ec.context_dim = actioncore::kProprioDims;
    ec.proprio_dim = actioncore::kProprioDims;
    ec.task_count = task_count_for(cfg);
    ec.encoder_hidden = fx.encoder_hidden;
    ec.mlp_hidden = fx.mlp_hidden;
    ec.vocab_size = vocab;
    ec.pretrain_width = fx.pretrain_width;
    ec.pretrain_blocks = fx.pretrain_blocks;
    ec.pretrain_heads = fx.pretrain_heads;
    ec.max_tokens = fx.max_tokens;
    ec.validate();
    return ec;
}

rtcsched::RtcTrainRule rtc_rule_from(const PipelineConfig& cfg) {
    rtcsched::RtcTrainRule rule;
    rule.d_max = cfg.rtcsched.d_max;
    rule.include_zero_delay = cfg.rtcsched.include_zero_delay;
    rule.validate(cfg.rtcsched.horizon);
    return rule;
}

rtcsched::SchedulerConfig sched_config_from(const PipelineConfig& cfg) {
    rtcsched::SchedulerConfig sc;
    sc.control_rate = cfg.rtcsched.control_rate;
    sc.lowlevel_rate = cfg.rtcsched.lowlevel_rate;
    sc.horizon = cfg.rtcsched.horizon;
    sc.s_min = cfg.rtcsched.s_min;
    sc.latency.kind = rtcsched::LatencySpec::Kind::fixed;
    sc.latency.fixed_ms = cfg.rtcsched.latency_ms;
    sc.mode = rtcsched::SchedMode::virtual_clock;
    sc.strategy = rtcsched::SchedStrategy::async_rtc;
    sc.validate();
    return sc;
}

flowexpert::TrainConfig train_config_from(const PipelineConfig& cfg, int steps, uint64_t tag,
                                          bool freeze_encoder) {
    flowexpert::TrainConfig tr;
    tr.steps = steps;
    tr.batch_size = cfg.flowexpert.batch_size;
    tr.lr = cfg.flowexpert.lr;
    tr.seed = mix_seed(mix_seed(cfg.seed, 0x7F), tag);
    tr.freeze_encoder = freeze_encoder;
    tr.rtc = rtc_rule_from(cfg);
    tr.validate();
    return tr;
}

/// A consumed checkpoint must describe the expert the config asks for;
/// anything else means the output directory holds artifacts from a
/// different configuration.
void check_checkpoint_shape(const flowexpert::ExpertParams& params, const PipelineConfig& cfg) {
    const auto& fx = cfg.flowexpert;
    bool ok = params.config.variant == flowexpert::variant_from_name(fx.variant) &&
              params.config.width == fx.width && params.config.blocks == fx.blocks &&
              params.config.horizon == fx.horizon &&
              params.config.action_dims == actioncore::kJointDims;
    require(ok, "checkpoint does not match the configured expert");
}

actioncore::Episode to_task_space(const actioncore::Episode& ep) {
    actioncore::Episode t = ep;
    t.space = actioncore::ActionSpace::task48;
    t.actions.clear();
    t.actions.reserve(ep.actions.size());
    for (const auto& row : ep.actions) {
        auto ja = actioncore::joint_action_from_row(row);
        t.actions.push_back(narrow(task_row_from_upper(actioncore::strip_to_upper28(ja))));
    }
    t.validate();
    return t;
}

json loss_curve(const flowexpert::TrainReport& report) {
    json doc;
    doc["initial_validation"] = report.initial_validation;
    doc["final_validation"] = report.final_validation;
    doc["losses"] = report.losses;
    return doc;
}

}  // namespace

std::vector<double> task_row_from_upper(const std::vector<double>& upper) {
    require_internal(upper.size() == size_t(actioncore::kUpperBodyDims),
                     "upper-body command must have 28 components");
    std::vector<double> row(size_t(actioncore::kTaskDims), 0.0);
    for (int side = 0; side < 2; ++side) {
        const double* h = upper.data() + 7 * side;
        const double* a = upper.data() + actioncore::kArmOffset + 7 * side;
        double sign = side == 0 ? 1.0 : -1.0;
        double* out = row.data() + side * actioncore::kTaskSideDims;

        double px = 0.25 + 0.12 * std::sin(a[0]) + 0.08 * std::sin(a[3]);
        double py = sign * 0.18 + 0.10 * std::sin(a[1]) + 0.05 * std::sin(a[4]);
        double pz = 0.62 + 0.15 * std::sin(a[2]) + 0.08 * std::sin(a[5] + 0.3 * a[6]);
        out[actioncore::kWristPosOffset + 0] = px;
        out[actioncore::kWristPosOffset + 1] = py;
        out[actioncore::kWristPosOffset + 2] = pz;

        auto R = mul3(rot_z(a[0] + 0.5 * a[4]), mul3(rot_y(a[1] + 0.5 * a[5]), rot_x(a[2] + 0.5 * a[6])));
        auto r6 = actioncore::rot6d_from_matrix(R);
        for (int i = 0; i < 6; ++i) out[actioncore::kWristRotOffset + i] = r6[size_t(i)];

        for (int f = 0; f < 5; ++f) {
            double curl = 0.5 * h[f] + 0.3 * h[(f + 2) % 7];
            double spread = -0.5 + 0.25 * f;
            double* tip = out + actioncore::kFingertipOffset + 3 * f;
            tip[0] = px + 0.10 * std::cos(curl) * std::cos(spread);
            tip[1] = py + sign * 0.10 * std::cos(curl) * std::sin(spread);
            tip[2] = pz - 0.10 * std::sin(curl);
        }
    }
    return row;
}

std::vector<flowexpert::FlowItem> build_flow_items(const std::vector<actioncore::Episode>& episodes,
                                                   const actioncore::NormStats& stats, int horizon,
                                                   int stride) {
    require(horizon >= 1 && stride >= 1, "flow window needs a positive horizon and stride");
    auto pads = actioncore::degenerate_dims(stats);
    std::vector<flowexpert::FlowItem> items;
    for (const auto& ep : episodes) {
        if (ep.frames() < size_t(horizon)) continue;
        int dims = int(ep.actions.front().size());
        for (size_t f = 0; f + size_t(horizon) <= ep.frames(); f += size_t(stride)) {
            flowexpert::FlowItem item;
            item.input.task_id = ep.task_id;
            item.input.context = widen(ep.contexts[f]);
            item.input.proprio = widen(ep.states[f]);
            item.chunk = flowexpert::Mat(horizon, dims);
            for (int s = 0; s < horizon; ++s) {
                auto norm = actioncore::normalize(widen(ep.actions[f + size_t(s)]), stats, pads);
                for (int d = 0; d < dims; ++d) item.chunk.at(s, d) = norm[size_t(d)];
            }
            items.push_back(std::move(item));
        }
    }
    require_data(!items.empty(), "no training windows: demonstrations shorter than the chunk horizon");
    return items;
}

std::vector<flowexpert::PretrainItem> build_pretrain_items(
    const std::vector<actioncore::Episode>& episodes, const fasttok::TokenizerModel& model,
    const actioncore::NormStats& stats) {
    int horizon = model.config.action_horizon;
    auto pads = actioncore::degenerate_dims(stats);
    std::vector<flowexpert::PretrainItem> items;
    for (const auto& ep : episodes) {
        for (size_t f = 0; f + size_t(horizon) <= ep.frames(); f += size_t(horizon)) {
            flowexpert::PretrainItem item;
            item.input.task_id = ep.task_id;
            item.input.context = widen(ep.contexts[f]);
            item.input.proprio = widen(ep.states[f]);
            item.tokens = fasttok::encode(model, chunk_values(ep, stats, pads, f, horizon));
            items.push_back(std::move(item));
        }
    }
    require_data(!items.empty(), "tokenizer corpus is empty");
    return items;
}

rtcsched::ChunkPolicy expert_policy(std::shared_ptr<flowexpert::ExpertParams> params,
                                    actioncore::NormStats stats, uint64_t seed, int integrate_steps) {
    require(params != nullptr, "expert policy needs parameters");
    auto rng = std::make_shared<Rng>(mix_seed(seed, 0xE5));
    auto pads = std::make_shared<std::set<int>>(actioncore::degenerate_dims(stats));
    auto shared_stats = std::make_shared<actioncore::NormStats>(std::move(stats));
    int horizon = params->config.horizon;
    int dims = params->config.action_dims;
    return [params, rng, pads, shared_stats, horizon, dims,
            integrate_steps](const actioncore::Observation& obs, const flowexpert::Mat& prefix) {
        flowexpert::ExpertInput input;
        input.task_id = obs.task_id;
        input.context = obs.context;
        input.proprio.assign(obs.proprio.v.begin(), obs.proprio.v.end());

        flowexpert::Mat eps(horizon, dims);
        for (auto& v : eps.data) v = rng->normal();

        flowexpert::Mat norm_prefix(prefix.rows, dims);
        for (int r = 0; r < prefix.rows; ++r) {
            std::vector<double> row(size_t(dims), 0.0);
            for (int d = 0; d < dims; ++d) row[size_t(d)] = prefix.at(r, d);
            auto norm = actioncore::normalize(row, *shared_stats, *pads);
            for (int d = 0; d < dims; ++d) norm_prefix.at(r, d) = norm[size_t(d)];
        }

        auto out = flowexpert::sample_actions(*params, input, eps, integrate_steps, norm_prefix);
        flowexpert::Mat chunk(horizon, dims);
        for (int r = 0; r < horizon; ++r) {
            std::vector<double> row(size_t(dims), 0.0);
            for (int d = 0; d < dims; ++d) row[size_t(d)] = out.at(r, d);
            auto raw = actioncore::denormalize(row, *shared_stats, *pads);
            for (int d = 0; d < dims; ++d) chunk.at(r, d) = raw[size_t(d)];
        }
        return chunk;
    };
}

StageOutcome run_gendata(const PipelineConfig& cfg) {
    StageOutcome out;
    auto factor = actioncore::Rational::parse(cfg.actioncore.resample);

    std::vector<actioncore::Episode> joint;
    std::vector<std::string> refs = task_refs(cfg);
    for (const auto& ref : refs) {
        if (ref != "reach" && ref.rfind("synthetic:", 0) != 0) record_input(out.manifest, ref);
        auto task = resolve_task(ref, cfg.seed);
        simplant::DemoOptions opt;
        opt.control_rate = cfg.rtcsched.control_rate;
        auto demos = simplant::generate_demos(
            task, cfg.simplant.episodes, mix_seed(mix_seed(cfg.seed, 0xDA7A), uint64_t(task.task_id)),
            opt);
        joint.insert(joint.end(), demos.begin(), demos.end());
    }
    if (factor.num != factor.den)
        for (auto& ep : joint) ep = actioncore::resample_episode(ep, factor);

    std::vector<actioncore::Episode> task_eps;
    task_eps.reserve(joint.size());
    for (const auto& ep : joint) task_eps.push_back(to_task_space(ep));

    actioncore::NormStats jstats, tstats;
    if (cfg.actioncore.normalization == "fit") {
        jstats = fit_action_stats(joint);
        tstats = fit_action_stats(task_eps);
    } else {
        fs::path dir(cfg.actioncore.normalization);
        require_artifact(dir / artifact::kJointNorm, "normalization stats");
        require_artifact(dir / artifact::kTaskNorm, "normalization stats");
        record_input(out.manifest, dir / artifact::kJointNorm);
        record_input(out.manifest, dir / artifact::kTaskNorm);
        jstats = load_norm_stats(dir / artifact::kJointNorm);
        tstats = load_norm_stats(dir / artifact::kTaskNorm);
    }
    require_data(jstats.dims() == actioncore::kJointDims && tstats.dims() == actioncore::kTaskDims,
                 "normalization stats have the wrong dimension count");

    actioncore::write_dataset(out_path(cfg, artifact::kJointDemos), joint);
    actioncore::write_dataset(out_path(cfg, artifact::kTaskDemos), task_eps);
    save_norm_stats(out_path(cfg, artifact::kJointNorm), jstats);
    save_norm_stats(out_path(cfg, artifact::kTaskNorm), tstats);
    for (const char* name : {artifact::kJointDemos, artifact::kTaskDemos, artifact::kJointNorm,
                             artifact::kTaskNorm})
        record_output(out.manifest, out_path(cfg, name));

    int64_t frames = 0;
    for (const auto& ep : joint) frames += int64_t(ep.frames());
    out.manifest.counters["tasks"] = int64_t(refs.size());
    out.manifest.counters["episodes_per_task"] = cfg.simplant.episodes;
    out.manifest.counters["episodes"] = int64_t(joint.size());
    out.manifest.counters["frames"] = frames;

    std::ostringstream s;
    s << "generated " << joint.size() << " episodes across " << refs.size() << " tasks (" << frames
      << " frames, joint + task space)";
    out.summary = s.str();
    return out;
}

StageOutcome run_fit_tokenizer(const PipelineConfig& cfg) {
    StageOutcome out;
    auto demos_path = out_path(cfg, artifact::kTaskDemos);
    auto norm_path = out_path(cfg, artifact::kTaskNorm);
    require_artifact(demos_path, "gendata dataset");
    require_artifact(norm_path, "normalization stats");
    record_input(out.manifest, demos_path);
    record_input(out.manifest, norm_path);

    auto episodes = actioncore::read_dataset(demos_path);
    auto stats = load_norm_stats(norm_path);
    auto pads = actioncore::degenerate_dims(stats);

    fasttok::TokenizerConfig tc;
    tc.action_horizon = cfg.fasttok.horizon;
    tc.scale = cfg.fasttok.scale;
    tc.vocab_size = cfg.fasttok.vocab;
    tc.dims_per_step = actioncore::kTaskDims;
    tc.validate();

    std::vector<std::vector<double>> values;
    for (const auto& ep : episodes)
        for (size_t f = 0; f + size_t(tc.action_horizon) <= ep.frames(); f += size_t(tc.action_horizon))
            values.push_back(chunk_values(ep, stats, pads, f, tc.action_horizon));
    require_data(!values.empty(), "tokenizer corpus is empty");

    std::vector<std::vector<int>> corpus;
    corpus.reserve(values.size());
    for (const auto& v : values)
        corpus.push_back(fasttok::quantize(fasttok::dct_forward(v, tc.action_horizon, tc.dims_per_step),
                                           tc.scale));

    auto model = fasttok::fit_bpe(corpus, tc);
    fasttok::save_tokenizer(out_path(cfg, artifact::kTokenizer), model);

    auto report = fasttok::reconstruction_report(model, values);
    json rep;
    rep["command"] = "fit-tokenizer";
    rep["sequences"] = values.size();
    rep["vocab_count"] = model.vocab_count();
    rep["merges"] = model.merges.size();
    rep["mean_l1"] = report.mean_l1;
    rep["max_abs_error"] = report.max_abs_error;
    rep["mean_token_length"] = report.mean_token_length;
    rep["compression"] = double(tc.flat_dims()) / report.mean_token_length;
    write_report(out_path(cfg, artifact::kTokenizerReport), rep);

    record_output(out.manifest, out_path(cfg, artifact::kTokenizer));
    record_output(out.manifest, out_path(cfg, artifact::kTokenizerReport));
    out.manifest.counters["sequences"] = int64_t(values.size());
    out.manifest.counters["vocab_count"] = model.vocab_count();
    out.manifest.counters["merges"] = int64_t(model.merges.size());

    std::ostringstream s;
    s << "fitted tokenizer: vocab " << model.vocab_count() << ", mean " << report.mean_token_length
      << " tokens/chunk over " << values.size() << " chunks";
    out.summary = s.str();
    return out;
}

StageOutcome run_pretrain(const PipelineConfig& cfg) {
    StageOutcome out;
    const auto& fx = cfg.flowexpert;

    std::vector<flowexpert::PretrainItem> items;
    std::vector<flowexpert::PretrainItem> heldout;
    int vocab = 0;
    int task_count = task_count_for(cfg);

    if (!fx.token_data.empty()) {
        record_input(out.manifest, fx.token_data);
        json doc = json::parse(read_text(fx.token_data), nullptr, false);
        require_data(!doc.is_discarded() && doc.is_object() && doc.contains("vocab") &&
                         doc.contains("sequences"),
                     "token data must be a JSON object with vocab and sequences");
        vocab = doc["vocab"].get<int>();
        require_data(vocab >= 2, "token data vocabulary is too small");
        auto parse_items = [&](const json& seqs) {
            std::vector<flowexpert::PretrainItem> parsed;
            require_data(seqs.is_array() && !seqs.empty(), "token data holds no sequences");
            for (const auto& seq : seqs) {
                flowexpert::PretrainItem item;
                item.input.task_id = int(parsed.size()) % task_count;
                item.input.context.assign(size_t(actioncore::kProprioDims), 0.0);
                item.input.proprio.assign(size_t(actioncore::kProprioDims), 0.0);
                for (const auto& t : seq) item.tokens.push_back(t.get<int>());
                require_data(!item.tokens.empty(), "token data holds an empty sequence");
                parsed.push_back(std::move(item));
            }
            return parsed;
        };
        items = parse_items(doc["sequences"]);
        if (doc.contains("heldout")) heldout = parse_items(doc["heldout"]);
    } else {
        auto tok_path = out_path(cfg, artifact::kTokenizer);
        auto demos_path = out_path(cfg, artifact::kTaskDemos);
        auto norm_path = out_path(cfg, artifact::kTaskNorm);
        require_artifact(tok_path, "tokenizer");
        require_artifact(demos_path, "gendata dataset");
        require_artifact(norm_path, "normalization stats");
        record_input(out.manifest, tok_path);
        record_input(out.manifest, demos_path);
        record_input(out.manifest, norm_path);
        auto model = fasttok::load_tokenizer(tok_path);
        auto episodes = actioncore::read_dataset(demos_path);
        auto stats = load_norm_stats(norm_path);
        items = build_pretrain_items(episodes, model, stats);
        vocab = model.vocab_count();
    }

    auto ec = expert_config_from(cfg, vocab);
    auto params = flowexpert::init_params(ec, mix_seed(cfg.seed, 0xE1));
    auto tr = train_config_from(cfg, fx.pretrain_steps, 1, false);
    auto report = flowexpert::train_pretrain(params, items, tr);
    flowexpert::save_checkpoint(out_path(cfg, artifact::kPretrainCkpt).string(), params);

    json rep = loss_curve(report);
    rep["command"] = "pretrain";
    rep["items"] = items.size();
    rep["vocab"] = vocab;
    rep["steps"] = fx.pretrain_steps;
    if (!heldout.empty()) rep["heldout_loss"] = flowexpert::eval_pretrain_loss(params, heldout);
    write_report(out_path(cfg, artifact::kPretrainReport), rep);

    record_output(out.manifest, out_path(cfg, artifact::kPretrainCkpt));
    record_output(out.manifest, out_path(cfg, artifact::kPretrainReport));
    out.manifest.counters["items"] = int64_t(items.size());
    out.manifest.counters["steps"] = fx.pretrain_steps;

    std::ostringstream s;
    s << "pretrained next-token head on " << items.size() << " sequences: loss "
      << report.initial_validation << " -> " << report.final_validation;
    if (!heldout.empty()) s << " (heldout " << rep["heldout_loss"].get<double>() << ")";
    out.summary = s.str();
    return out;
}

namespace {

/// Shared tail of the two flow-training stages.
StageOutcome run_flow_stage(const PipelineConfig& cfg, const char* command,
                            const char* input_ckpt_name, const std::string& input_ckpt_what,
                            const char* output_ckpt_name, const char* report_name, int steps,
                            uint64_t seed_tag, bool main_task_only) {
    StageOutcome out;
    auto ckpt_in = out_path(cfg, input_ckpt_name);
    auto demos_path = out_path(cfg, artifact::kJointDemos);
    auto norm_path = out_path(cfg, artifact::kJointNorm);
    require_artifact(ckpt_in, input_ckpt_what);
    require_artifact(demos_path, "gendata dataset");
    require_artifact(norm_path, "normalization stats");
    record_input(out.manifest, ckpt_in);
    record_input(out.manifest, demos_path);
    record_input(out.manifest, norm_path);

    auto params = flowexpert::load_checkpoint(ckpt_in.string());
    check_checkpoint_shape(params, cfg);
    auto episodes = actioncore::read_dataset(demos_path);
    auto stats = load_norm_stats(norm_path);

    if (main_task_only) {
        int keep = task_id_of(cfg.simplant.task);
        std::erase_if(episodes, [&](const actioncore::Episode& ep) { return ep.task_id != keep; });
        require_data(!episodes.empty(), "no demonstrations for the finetune task");
    }

    auto items = build_flow_items(episodes, stats, cfg.flowexpert.horizon, kFlowItemStride);
    auto tr = train_config_from(cfg, steps, seed_tag, true);
    auto report = flowexpert::train_flow(params, items, tr);
    flowexpert::save_checkpoint(out_path(cfg, output_ckpt_name).string(), params);

    json rep = loss_curve(report);
    rep["command"] = command;
    rep["items"] = items.size();
    rep["steps"] = steps;
    rep["loss_ratio"] = report.final_validation / report.initial_validation;
    write_report(out_path(cfg, report_name), rep);

    record_output(out.manifest, out_path(cfg, output_ckpt_name));
    record_output(out.manifest, out_path(cfg, report_name));
    out.manifest.counters["items"] = int64_t(items.size());
    out.manifest.counters["steps"] = steps;

    std::ostringstream s;
    s << command << " on " << items.size() << " windows: fm_loss " << report.initial_validation
      << " -> " << report.final_validation;
    out.summary = s.str();
    return out;
}

}  // namespace

StageOutcome run_posttrain(const PipelineConfig& cfg) {
    return run_flow_stage(cfg, "posttrain", artifact::kPretrainCkpt, "pretrain checkpoint",
                          artifact::kPosttrainCkpt, artifact::kPosttrainReport,
                          cfg.flowexpert.posttrain_steps, 2, false);
}

StageOutcome run_finetune(const PipelineConfig& cfg) {
    return run_flow_stage(cfg, "finetune", artifact::kPosttrainCkpt, "posttrain checkpoint",
                          artifact::kFinetuneCkpt, artifact::kFinetuneReport,
                          cfg.flowexpert.finetune_steps, 3, true);
}

StageOutcome run_bench_rtc(const PipelineConfig& cfg) {
    StageOutcome out;
    const auto& rc = cfg.rtcsched;
    int horizon = rc.horizon;
    int lam = std::max(1, int(std::ceil(rc.latency_ms * rc.control_rate / 1000.0 - 1e-9)));
    int overrun_smin = std::clamp(horizon - lam + 1, 1, horizon - 1);

    struct Point {
        double latency_ms;
        int s_min;
    };
    std::vector<Point> points{{0.0, rc.s_min}, {rc.latency_ms, rc.s_min}, {rc.latency_ms, overrun_smin}};

    rtcsched::PlantHook hook;
    hook.observe = [](int64_t) {
        actioncore::Observation obs;
        obs.context.assign(size_t(actioncore::kProprioDims), 0.0);
        return obs;
    };
    hook.apply = [](int64_t, const actioncore::JointAction&, bool) {};

    auto make_ramp = [horizon](int s_min) -> rtcsched::ChunkPolicy {
        auto calls = std::make_shared<int64_t>(0);
        return [calls, s_min, horizon](const actioncore::Observation&, const flowexpert::Mat&) {
            int64_t c = (*calls)++;
            flowexpert::Mat chunk(horizon, actioncore::kJointDims);
            for (int r = 0; r < horizon; ++r)
                for (int d = 0; d < actioncore::kJointDims; ++d)
                    chunk.at(r, d) = 0.3 * std::sin(0.09 * double(c * s_min + r) + 0.25 * d);
            return chunk;
        };
    };

    json point_reports = json::array();
    int trace_index = 0;
    for (const auto& p : points) {
        for (auto strategy : {rtcsched::SchedStrategy::async_rtc, rtcsched::SchedStrategy::sync_baseline}) {
            rtcsched::SchedulerConfig sc;
            sc.control_rate = rc.control_rate;
            sc.lowlevel_rate = rc.lowlevel_rate;
            sc.horizon = horizon;
            sc.s_min = p.s_min;
            sc.latency.kind = rtcsched::LatencySpec::Kind::fixed;
            sc.latency.fixed_ms = p.latency_ms;
            sc.mode = rtcsched::SchedMode::virtual_clock;
            sc.strategy = strategy;
            sc.validate();

            auto res = rtcsched::run_scheduler(sc, make_ramp(p.s_min), hook, kBenchTicks);
            auto cm = rtcsched::continuity_metrics(res.trace, res.chunks);
            int overruns = 0;
            for (const auto& sw : res.trace.switches) overruns += sw.overrun ? 1 : 0;

            auto trace_path =
                out_path(cfg, ("bench.trace." + std::to_string(trace_index++) + ".jsonl").c_str());
            rtcsched::write_trace_jsonl(trace_path, res.trace);
            record_output(out.manifest, trace_path);

            json pt;
            pt["latency_ms"] = p.latency_ms;
            pt["s_min"] = p.s_min;
            pt["horizon"] = horizon;
            pt["strategy"] = rtcsched::sched_strategy_name(strategy);
            pt["ticks"] = kBenchTicks;
            pt["gap_ticks"] = res.trace.gap_ticks;
            pt["chunks"] = res.trace.chunks_emitted;
            pt["switches"] = res.trace.switches.size();
            pt["overruns"] = overruns;
            pt["boundaries"] = cm.boundaries;
            pt["mean_divergence"] = cm.mean_divergence;
            pt["max_divergence"] = cm.max_divergence;
            pt["gap_per_boundary"] =
                cm.boundaries > 0 ? double(res.trace.gap_ticks) / cm.boundaries : 0.0;
            point_reports.push_back(std::move(pt));
        }
    }

    json rep;
    rep["command"] = "bench-rtc";
    rep["control_rate"] = rc.control_rate;
    rep["points"] = std::move(point_reports);
    write_report(out_path(cfg, artifact::kBenchReport), rep);
    record_output(out.manifest, out_path(cfg, artifact::kBenchReport));
    out.manifest.counters["points"] = int64_t(points.size());
    out.manifest.counters["runs"] = int64_t(points.size()) * 2;

    std::ostringstream s;
    s << "benchmarked " << points.size() << " sweep points (async + sync), " << kBenchTicks
      << " virtual ticks each";
    for (const auto& pt : rep["points"])
        s << "\n  " << pt["strategy"].get<std::string>() << " lat=" << pt["latency_ms"].get<double>()
          << "ms s_min=" << pt["s_min"].get<int>() << ": gaps=" << pt["gap_ticks"].get<int64_t>()
          << " overruns=" << pt["overruns"].get<int>()
          << " mean_div=" << pt["mean_divergence"].get<double>();
    out.summary = s.str();
    return out;
}

StageOutcome run_eval(const PipelineConfig& cfg) {
    StageOutcome out;
    auto ckpt_path = out_path(cfg, artifact::kFinetuneCkpt);
    auto norm_path = out_path(cfg, artifact::kJointNorm);
    require_artifact(ckpt_path, "finetune checkpoint");
    require_artifact(norm_path, "normalization stats");
    record_input(out.manifest, ckpt_path);
    record_input(out.manifest, norm_path);

    auto params = std::make_shared<flowexpert::ExpertParams>(
        flowexpert::load_checkpoint(ckpt_path.string()));
    check_checkpoint_shape(*params, cfg);
    auto stats = load_norm_stats(norm_path);
    auto task = resolve_task(cfg.simplant.task, cfg.seed);
    auto sched = sched_config_from(cfg);
    auto policy = expert_policy(params, stats, mix_seed(cfg.seed, 0x7E));

    auto report = simplant::evaluate(policy, task, sched, cfg.simplant.trials,
                                     mix_seed(cfg.seed, 0x7E));

    json rep;
    rep["command"] = "eval";
    rep["task"] = task.name;
    rep["task_id"] = task.task_id;
    rep["trials"] = report.trials;
    rep["successes"] = report.successes;
    rep["summary"] = report.summary();
    rep["per_subgoal"] = report.subgoal_successes;
    json lengths = json::array();
    double rmse_sum = 0.0;
    size_t rmse_n = 0;
    for (const auto& r : report.rollouts) {
        lengths.push_back(r.length);
        for (double v : r.rmse) {
            rmse_sum += v;
            ++rmse_n;
        }
    }
    rep["lengths"] = std::move(lengths);
    rep["mean_rmse"] = rmse_n > 0 ? rmse_sum / double(rmse_n) : 0.0;
    write_report(out_path(cfg, artifact::kEvalReport), rep);
    record_output(out.manifest, out_path(cfg, artifact::kEvalReport));
    out.manifest.counters["trials"] = report.trials;
    out.manifest.counters["successes"] = report.successes;

    std::ostringstream s;
    s << "evaluated " << task.name << ": " << report.summary() << " successes (per subgoal:";
    for (int k : report.subgoal_successes) s << " " << k;
    s << ")";
    out.summary = s.str();
    return out;
}

std::string inspect_artifact(const std::filesystem::path& path) {
    require(fs::exists(path), "no such artifact: " + path.string());
    json doc;
    doc["schema_version"] = kReportSchemaVersion;
    doc["path"] = path.filename().string();

    std::ifstream in(path, std::ios::binary);
    std::string magic(6, '\0');
    in.read(magic.data(), 6);
    in.close();

    if (magic == actioncore::kDatasetMagic) {
        auto episodes = actioncore::read_dataset(path);
        doc["kind"] = "dataset";
        doc["episodes"] = episodes.size();
        int64_t frames = 0;
        std::set<std::string> spaces;
        std::set<int> ids;
        for (const auto& ep : episodes) {
            frames += int64_t(ep.frames());
            spaces.insert(actioncore::action_space_name(ep.space));
            ids.insert(ep.task_id);
        }
        doc["frames"] = frames;
        doc["spaces"] = spaces;
        doc["task_ids"] = ids;
        if (!episodes.empty()) doc["frame_rate"] = episodes.front().frame_rate;
        return doc.dump(2) + "\n";
    }
    if (magic == flowexpert::kCheckpointMagic) {
        auto params = flowexpert::load_checkpoint(path.string());
        doc["kind"] = "checkpoint";
        doc["variant"] = flowexpert::variant_name(params.config.variant);
        doc["width"] = params.config.width;
        doc["blocks"] = params.config.blocks;
        doc["heads"] = params.config.heads;
        doc["horizon"] = params.config.horizon;
        doc["action_dims"] = params.config.action_dims;
        doc["vocab_size"] = params.config.vocab_size;
        doc["parameters"] = params.store.total_params();
        doc["step"] = params.step;
        return doc.dump(2) + "\n";
    }

    json body = json::parse(read_text(path), nullptr, false);
    require_data(!body.is_discarded(), "unrecognized artifact format: " + path.string());
    if (body.contains("merges") && body.contains("config")) {
        const auto& tc = body["config"];
        doc["kind"] = "tokenizer";
        doc["merges"] = body["merges"].size();
        doc["scale"] = tc.value("scale", 0);
        doc["action_horizon"] = tc.value("action_horizon", 0);
        doc["vocab_count"] = 2 * tc.value("scale", 0) + 1 + int(body["merges"].size());
    } else if (body.contains("q01")) {
        doc["kind"] = "norm_stats";
        doc["dims"] = body["q01"].size();
        int degenerate = 0;
        for (const auto& d : body["degenerate"]) degenerate += d.get<int>();
        doc["degenerate"] = degenerate;
    } else if (body.contains("subgoals")) {
        doc["kind"] = "task";
        doc["task_id"] = body.value("task_id", 0);
        doc["name"] = body.value("name", "");
        doc["subgoals"] = body["subgoals"].size();
    } else if (body.contains("command") && body.contains("config_hash")) {
        doc["kind"] = "manifest";
        doc["command"] = body["command"];
        doc["outputs"] = body.value("outputs", json::object()).size();
        doc["wall_ms"] = body.value("wall_ms", 0);
    } else if (body.contains("command")) {
        doc["kind"] = "report";
        doc["command"] = body["command"];
    } else {
        doc["kind"] = "json";
        std::vector<std::string> keys;
        for (auto it = body.begin(); it != body.end(); ++it) keys.push_back(it.key());
        doc["keys"] = keys;
    }
    return doc.dump(2) + "\n";
}

}  // namespace psi::cli
