#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <psi/simplant/tasks.hpp>

namespace psi::cli {

inline constexpr const char* kVersion = "0.1.0";

/// Demo corpus handling: where normalization statistics come from and how
/// generated episodes are resampled before they are written.
struct ActioncoreSection {
    std::string normalization = "fit";  ///< "fit" or a path to existing stats
    std::string resample = "1";         ///< rational factor, e.g. "1", "2", "1/2"
};

struct FasttokSection {
    int scale = 100;
    int vocab = 384;
    int horizon = 1;  ///< action steps per token group
};

/// Model shape plus the per-stage step budgets.
struct FlowexpertSection {
    std::string variant = "mmdit";
    int width = 32;
    int blocks = 2;
    int heads = 2;
    int vl_tokens = 4;
    int horizon = 16;
    int encoder_hidden = 32;
    int mlp_hidden = 64;
    int pretrain_width = 32;
    int pretrain_blocks = 2;
    int pretrain_heads = 2;
    int max_tokens = 64;
    int pretrain_steps = 400;
    int posttrain_steps = 400;
    int finetune_steps = 200;
    int batch_size = 8;
    double lr = 1e-3;
    std::string token_data;  ///< optional token-corpus JSON consumed by pretrain
};

struct RtcschedSection {
    double control_rate = 30.0;
    double lowlevel_rate = 60.0;
    int horizon = 16;
    int s_min = 8;
    double latency_ms = 160.0;
    int d_max = 6;
    bool include_zero_delay = true;
};

/// Task references: "reach" (the committed evaluation task), "synthetic:<id>"
/// (seeded generator), or a path to a task spec JSON file.
struct SimplantSection {
    std::string task = "reach";
    std::vector<std::string> extra_tasks = {"synthetic:1", "synthetic:2"};
    int episodes = 12;  ///< demos per task
    int trials = 10;    ///< evaluation rollouts
};

struct PipelineConfig {
    uint64_t seed = 0;
    std::string out = "runs/default";
    ActioncoreSection actioncore;
    FasttokSection fasttok;
    FlowexpertSection flowexpert;
    RtcschedSection rtcsched;
    SimplantSection simplant;

    /// Cross-section invariants: the chunk horizon must agree between the
    /// expert and the scheduler, the delay bound must fit inside it, the
    /// token budget must cover a worst-case uncompressed chunk, and every
    /// referenced file must resolve.
    void validate() const;
};

/// Parses a JSON document over the defaults. Unknown keys are an error.
PipelineConfig config_from_json(const std::string& body);

/// Deterministic resolved form: every field, fixed order.
std::string config_to_json(const PipelineConfig& cfg);

/// Applies one "section.key=value" override; the value is parsed as JSON
/// when possible and taken as a string otherwise.
void apply_override(PipelineConfig& cfg, const std::string& spec);

/// Resolves a task reference against the pipeline seed.
simplant::TaskSpec resolve_task(const std::string& ref, uint64_t seed);

/// The numeric task id a reference resolves to, without building the task.
int task_id_of(const std::string& ref);

}  // namespace psi::cli
