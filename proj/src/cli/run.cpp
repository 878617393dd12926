#include <psi/cli/run.hpp>

#include <chrono>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <psi/cli/artifacts.hpp>
#include <psi/cli/config.hpp>
#include <psi/cli/pipeline.hpp>
#include <psi/common/errors.hpp>
#include <psi/common/hash.hpp>

namespace psi::cli {
namespace {

namespace fs = std::filesystem;

struct CommonFlags {
    std::string config_path;
    std::optional<uint64_t> seed;
    std::string out;
    std::vector<std::string> sets;
};

struct StageSpec {
    const char* name;
    const char* description;
    StageOutcome (*fn)(const PipelineConfig&);
};

constexpr StageSpec kStages[] = {
    {"gendata", "generate demonstrations, derive task-space data, fit normalization", &run_gendata},
    {"fit-tokenizer", "fit the BPE action tokenizer on task-space chunks", &run_fit_tokenizer},
    {"pretrain", "train the next-token head on tokenized action data", &run_pretrain},
    {"posttrain", "train the flow expert on all tasks (encoder frozen)", &run_posttrain},
    {"finetune", "specialize the flow expert on the main task", &run_finetune},
    {"bench-rtc", "sweep the chunk scheduler, report gaps and divergence", &run_bench_rtc},
    {"eval", "closed-loop evaluation of the finetuned expert", &run_eval},
};

PipelineConfig resolve_config(const CommonFlags& flags) {
    PipelineConfig cfg;
    if (!flags.config_path.empty()) {
        require(fs::exists(flags.config_path), "config file not found: " + flags.config_path);
        cfg = config_from_json(read_text(flags.config_path));
    }
    for (const auto& spec : flags.sets) apply_override(cfg, spec);
    if (flags.seed) cfg.seed = *flags.seed;
    if (!flags.out.empty()) cfg.out = flags.out;
    cfg.validate();
    return cfg;
}

int run_stage(const StageSpec& stage, const CommonFlags& flags) {
    auto cfg = resolve_config(flags);
    DirLock lock(cfg.out);
    auto t0 = std::chrono::steady_clock::now();
    auto outcome = stage.fn(cfg);
    auto& man = outcome.manifest;
    man.command = stage.name;
    man.config_hash = hex64(fnv1a64(config_to_json(cfg)));
    man.version = kVersion;
    man.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    write_manifest(cfg.out, man);
    std::cout << outcome.summary << "\n";
    std::cout << "manifest: "
              << (fs::path(cfg.out) / ("manifest." + std::string(stage.name) + ".json")).string()
              << " (" << man.wall_ms << " ms)\n";
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CommonFlags flags;
    std::string inspect_path;

    CLI::App app{"operator surface for the desk-scale humanoid manipulation pipeline"};
    app.require_subcommand(1);

    for (const auto& stage : kStages) {
        auto* sub = app.add_subcommand(stage.name, stage.description);
        sub->add_option("--config", flags.config_path, "pipeline config JSON file");
        sub->add_option("--seed", flags.seed, "override the global seed");
        sub->add_option("--out", flags.out, "output directory for artifacts");
        sub->add_option("--set", flags.sets, "override one config field, section.key=value")
            ->allow_extra_args(false);
    }
    auto* inspect = app.add_subcommand("inspect", "dump a machine-readable artifact header");
    inspect->add_option("path", inspect_path, "artifact file to inspect")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (inspect->parsed()) {
            std::cout << inspect_artifact(inspect_path);
            return 0;
        }
        for (const auto& stage : kStages)
            if (app.get_subcommand(stage.name)->parsed()) return run_stage(stage, flags);
        std::cerr << "error: no subcommand selected\n";
        return 1;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const InternalError& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace psi::cli
