#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <psi/actioncore/normalize.hpp>
#include <psi/actioncore/types.hpp>
#include <psi/cli/artifacts.hpp>
#include <psi/cli/config.hpp>
#include <psi/fasttok/tokenizer.hpp>
#include <psi/flowexpert/train.hpp>
#include <psi/rtcsched/scheduler.hpp>

namespace psi::cli {

/// Fixed artifact names inside an output directory.
namespace artifact {
inline constexpr const char* kJointDemos = "demos.joint.psids";
inline constexpr const char* kTaskDemos = "demos.task.psids";
inline constexpr const char* kJointNorm = "norm.joint.json";
inline constexpr const char* kTaskNorm = "norm.task.json";
inline constexpr const char* kTokenizer = "tokenizer.json";
inline constexpr const char* kTokenizerReport = "report.tokenizer.json";
inline constexpr const char* kPretrainCkpt = "checkpoint.pretrain.psick";
inline constexpr const char* kPretrainReport = "report.pretrain.json";
inline constexpr const char* kPosttrainCkpt = "checkpoint.posttrain.psick";
inline constexpr const char* kPosttrainReport = "report.posttrain.json";
inline constexpr const char* kFinetuneCkpt = "checkpoint.finetune.psick";
inline constexpr const char* kFinetuneReport = "report.finetune.json";
inline constexpr const char* kBenchReport = "report.bench.json";
inline constexpr const char* kEvalReport = "report.eval.json";
}  // namespace artifact

/// One executed pipeline stage: the manifest rows it produced plus a short
/// human summary for stdout.
struct StageOutcome {
    RunManifest manifest;
    std::string summary;
};

/// Synthetic end-effector map, the desk-scale stand-in for forward
/// kinematics: 28 upper joints -> 48 task-space values (per side: wrist
/// position, wrist 6D rotation, five fingertip positions). Smooth,
/// deterministic, bounded.
std::vector<double> task_row_from_upper(const std::vector<double>& upper);

/// Normalized flow-matching items from joint-space episodes: overlapping
/// windows of `horizon` frames taken every `stride` frames, conditioned on
/// the observation at the window start.
std::vector<flowexpert::FlowItem> build_flow_items(
    const std::vector<actioncore::Episode>& episodes, const actioncore::NormStats& stats,
    int horizon, int stride);

/// Tokenized next-token items from task-space episodes: each group of
/// `model.config.action_horizon` frames becomes one token sequence. Values
/// are normalized, scaled into the quantizer range, and encoded.
std::vector<flowexpert::PretrainItem> build_pretrain_items(
    const std::vector<actioncore::Episode>& episodes, const fasttok::TokenizerModel& model,
    const actioncore::NormStats& stats);

/// The deployed chunk policy: integrate the learned flow from seeded noise,
/// with the committed prefix pinned in normalized space, then denormalize.
rtcsched::ChunkPolicy expert_policy(std::shared_ptr<flowexpert::ExpertParams> params,
                                    actioncore::NormStats stats, uint64_t seed,
                                    int integrate_steps = 10);

StageOutcome run_gendata(const PipelineConfig& cfg);
StageOutcome run_fit_tokenizer(const PipelineConfig& cfg);
StageOutcome run_pretrain(const PipelineConfig& cfg);
StageOutcome run_posttrain(const PipelineConfig& cfg);
StageOutcome run_finetune(const PipelineConfig& cfg);
StageOutcome run_bench_rtc(const PipelineConfig& cfg);
StageOutcome run_eval(const PipelineConfig& cfg);

/// Dumps a machine-readable header for any artifact the pipeline writes.
std::string inspect_artifact(const std::filesystem::path& path);

}  // namespace psi::cli
