#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "npudeploy/compat.hpp"
#include "npudeploy/simcore.hpp"

namespace npu::cli {

/// Stable process exit codes.
enum ExitCode : int { kOk = 0, kError = 1, kIncompatible = 2, kRequirementsUnmet = 3 };

struct Requirements {
    double max_latency_ms = 0.0;
    double max_power_mw = 0.0;
    bool operator==(const Requirements&) const = default;
};

/// Accepts a preset name (image, video, keyword) or "lat_ms=X,power_mw=Y".
Requirements parse_requirements(const std::string& text);

struct PipelineConfig {
    std::filesystem::path model_path;
    std::optional<std::filesystem::path> chip_path;
    std::optional<std::filesystem::path> input_path;   // synthetic input from `seed` when absent
    EncodeMode encode_mode = EncodeMode::Rate;
    std::int64_t timesteps = 4;
    std::filesystem::path output_dir = "pipeline_out";
    RankingKey ranking_key = RankingKey::AccuracyThenResolution;
    std::uint64_t seed = 0;
    std::string workload = "image";
    std::optional<Requirements> requirements;
    std::optional<std::size_t> label;   // expected class of the input, for accuracy
    int workers = 1;

    bool learn = false;
    std::filesystem::path samples_dir;
    std::string class_name;
    std::size_t neurons_per_class = 2;
    std::size_t new_slots = 3;
};

struct PipelineResult {
    int exit_code = kOk;
    std::vector<std::string> stages;   // in execution order
};

/// analyze -> map -> [learn] -> run -> report, writing compat.json, plan.json,
/// stats.json and report.json into the output directory.
PipelineResult run_pipeline(const PipelineConfig& config, std::ostream& out, std::ostream& err);

/// Deterministic uniform 8-bit tensor from a seed.
InputTensor synthetic_input(const Shape3& shape, std::uint64_t seed);

/// Entry point of the npu-deploy tool.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace npu::cli
