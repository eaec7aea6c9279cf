#include "npudeploy/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "npudeploy/compat.hpp"
#include "npudeploy/errors.hpp"
#include "npudeploy/hwmodel.hpp"
#include "npudeploy/learn.hpp"
#include "npudeploy/mapper.hpp"
#include "npudeploy/metrics.hpp"
#include "npudeploy/netir.hpp"
#include "npudeploy/simcore.hpp"

namespace npu::cli {

namespace fs = std::filesystem;
using nlohmann::json;

Requirements parse_requirements(const std::string& text) {
    if (text == "image") return {50.0, 250.0};
    if (text == "video") return {200.0, 250.0};
    if (text == "keyword") return {5.0, 250.0};
    Requirements r;
    bool have_lat = false;
    bool have_pow = false;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw ParseError("requirement '" + item + "' is not key=value");
        const auto key = item.substr(0, eq);
        double value = 0.0;
        try {
            value = std::stod(item.substr(eq + 1));
        } catch (const std::logic_error&) {
            throw ParseError("requirement '" + item + "' has a non-numeric value");
        }
        if (key == "lat_ms") {
            r.max_latency_ms = value;
            have_lat = true;
        } else if (key == "power_mw") {
            r.max_power_mw = value;
            have_pow = true;
        } else {
            throw ParseError("unknown requirement '" + key + "' (expected lat_ms, power_mw)");
        }
    }
    if (!have_lat || !have_pow) throw ParseError("requirements need both lat_ms and power_mw");
    return r;
}

InputTensor synthetic_input(const Shape3& shape, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    InputTensor t;
    t.shape = shape;
    t.dtype = InputDType::U8;
    t.values.resize(static_cast<std::size_t>(shape.volume()));
    for (auto& v : t.values) v = static_cast<std::int32_t>((rng() >> 32) % 256);
    return t;
}

namespace {

ProcessorConfig resolve_chip(const std::optional<fs::path>& chip_path) {
    if (chip_path && !chip_path->empty()) return load_chip(*chip_path);
    if (const char* env = std::getenv("NPU_DEPLOY_CHIP"); env && *env) return load_chip(env);
    return default_akida();
}

void write_json(const json& doc, const fs::path& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot write " + path.string());
    os << doc.dump(2) << '\n';
    if (!os) throw IoError("write failed for " + path.string());
}

std::vector<fs::path> sample_files(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError("samples directory " + dir.string() + " does not exist");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".bin") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError("no .bin samples in " + dir.string());
    return files;
}

struct LearnSettings {
    std::string class_name;
    std::size_t neurons_per_class = 2;
    std::size_t new_slots = 3;
    EncodeMode encode_mode = EncodeMode::Rate;
    std::int64_t timesteps = 4;
    int workers = 1;
};

// Binary head input of one sample: spike counts of the layer feeding the classifier.
BitVector head_input(const NetworkModel& model, const AllocationPlan& plan, const InputTensor& sample,
                     const LearnSettings& s) {
    const auto frames = encode(sample, s.timesteps, s.encode_mode);
    if (model.layers.size() == 1) {
        std::vector<std::int64_t> counts(static_cast<std::size_t>(model.layers[0].in_shape.volume()), 0);
        for (const auto& f : frames) {
            for (const auto& ev : f.events) ++counts[static_cast<std::size_t>(f.shape.index(ev.h, ev.w, ev.c))];
        }
        return binarize_counts(counts, s.timesteps);
    }
    RunParams params;
    params.timesteps = s.timesteps;
    params.workers = s.workers;
    params.capture_layer = model.layers.size() - 2;
    const auto stats = run(model, plan, frames, params);
    return binarize_counts(stats.captured_counts, s.timesteps);
}

struct LearnOutcome {
    NetworkModel model;
    std::size_t class_slot = 0;
    std::size_t samples = 0;
};

LearnOutcome learn_from_samples(const NetworkModel& model, const AllocationPlan& plan, const fs::path& samples_dir,
                                const LearnSettings& s) {
    if (s.class_name.empty()) throw ValidationError("a class name is required for learning");
    LearnableHead head;
    NetworkModel current = model;
    if (model.layers.back().head) {
        head = head_from_model(model);
    } else {
        std::tie(current, head) = replace_head(model, s.new_slots, s.neurons_per_class);
    }

    std::optional<std::size_t> slot;
    for (std::size_t c = head.n_old_classes; c < head.n_classes(); ++c) {
        if (head.class_names[c] == s.class_name) slot = c;
    }
    if (!slot) slot = next_free_slot(head);
    if (!slot) throw SlotsExhausted("no free class slot for '" + s.class_name + "'");
    head.class_names[*slot] = s.class_name;

    std::vector<BitVector> bits;
    for (const auto& file : sample_files(samples_dir)) {
        bits.push_back(head_input(model, plan, read_input_tensor(file), s));
    }
    head = learn_class(std::move(head), bits, *slot);
    return {store_head(current, head), *slot, bits.size()};
}

json selection_to_json(const Selection& sel) {
    json ranked = json::array();
    for (const auto& s : sel.ranked) {
        ranked.push_back({{"model", s.model.name},
                          {"accuracy", s.model.accuracy ? json(*s.model.accuracy) : json(nullptr)},
                          {"npu_total", s.report.npu_total},
                          {"mem_total", s.report.mem_total}});
    }
    json rejected = json::array();
    for (const auto& r : sel.rejected) rejected.push_back({{"model", r.name}, {"reason", r.reason}});
    return {{"selected", ranked}, {"rejected", rejected}};
}

bool meets(const RunReport& report, const Requirements& req) {
    return report.latency_s * 1e3 <= req.max_latency_ms && report.power_w * 1e3 <= req.max_power_mw;
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& cfg, std::ostream& out, std::ostream& err) {
    PipelineResult result;
    auto stage = [&](const std::string& name) {
        result.stages.push_back(name);
        out << "[" << result.stages.size() << "] " << name << '\n';
    };
    try {
        const auto chip = resolve_chip(cfg.chip_path);
        auto model = load_model(cfg.model_path);
        fs::create_directories(cfg.output_dir);

        stage("analyze");
        auto compat = analyze(model, chip);
        write_json(compat_to_json(compat), cfg.output_dir / "compat.json");
        if (!compat.compatible) {
            err << "model '" << model.name << "' does not fit chip '" << chip.name << "' (" << compat.npu_total << "/"
                << compat.npu_budget << " NPUs); select a smaller network\n";
            result.exit_code = kIncompatible;
            return result;
        }

        stage("map");
        auto plan = map(model, chip);
        write_json(plan_to_json(plan), cfg.output_dir / "plan.json");

        if (cfg.learn) {
            stage("learn");
            LearnSettings s{cfg.class_name, cfg.neurons_per_class, cfg.new_slots, cfg.encode_mode, cfg.timesteps,
                            cfg.workers};
            auto learned = learn_from_samples(model, plan, cfg.samples_dir, s);
            model = std::move(learned.model);
            model.weight_blob = "learned_model.bin";
            save_model(model, cfg.output_dir / "learned_model.json");
            compat = analyze(model, chip);
            if (!compat.compatible) {
                err << "model with the learnable head no longer fits the chip\n";
                result.exit_code = kIncompatible;
                return result;
            }
            plan = map(model, chip);
            write_json(plan_to_json(plan), cfg.output_dir / "plan_learned.json");
            out << "learned class '" << cfg.class_name << "' into slot " << learned.class_slot << " from "
                << learned.samples << " samples\n";
        }

        stage("run");
        const InputTensor input = cfg.input_path ? read_input_tensor(*cfg.input_path)
                                                 : synthetic_input(model.layers.front().in_shape, cfg.seed);
        RunParams params;
        params.timesteps = cfg.timesteps;
        params.workers = cfg.workers;
        const auto stats = run(model, plan, encode(input, cfg.timesteps, cfg.encode_mode), params);
        write_json(stats_to_json(stats), cfg.output_dir / "stats.json");

        stage("report");
        auto report = estimate(stats, plan, chip, cfg.workload);
        if (cfg.label) report.accuracy = stats.predicted_class == *cfg.label ? 1.0 : 0.0;
        write_report(report, cfg.output_dir / "report.json", ReportFormat::Json);
        write_report(report, cfg.output_dir / "report.csv", ReportFormat::Csv);
        out << format_summary(report);

        if (cfg.requirements && !meets(report, *cfg.requirements)) {
            err << "requirements not met (max " << cfg.requirements->max_latency_ms << " ms, "
                << cfg.requirements->max_power_mw << " mW)\n";
            result.exit_code = kRequirementsUnmet;
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        result.exit_code = kError;
    }
    return result;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Deployment planning and simulation for SNNs on NPU-fabric neuromorphic chips", "npu-deploy"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string chip_path;
    std::string out_path;
    std::uint64_t seed = 0;
    std::string format = "json";
    app.add_option("--chip", chip_path, "Processor config JSON (default: $NPU_DEPLOY_CHIP or the built-in AKD1000)");
    app.add_option("--out", out_path, "Output file");
    app.add_option("--seed", seed, "Seed for synthetic inputs");
    app.add_option("--format", format, "Report format")->check(CLI::IsMember({"json", "csv"}));

    // analyze
    std::vector<std::string> analyze_models;
    std::string rank = "accuracy";
    auto* analyze_cmd = app.add_subcommand("analyze", "Check whether networks fit the chip in one pass");
    analyze_cmd->add_option("--model", analyze_models, "Model manifest(s)")->required()->check(CLI::ExistingFile);
    analyze_cmd->add_option("--rank", rank, "Ranking key when several models are given")
        ->check(CLI::IsMember({"accuracy", "npu"}));

    // map
    std::string map_model;
    auto* map_cmd = app.add_subcommand("map", "Allocate NPUs for a compatible network");
    map_cmd->add_option("--model", map_model, "Model manifest")->required()->check(CLI::ExistingFile);

    // run
    std::string run_model, run_plan, run_input, encode_mode = "rate";
    std::int64_t steps = 4;
    int workers = 1;
    double leak = 1.0;
    std::int64_t u_rst = 0;
    auto* run_cmd = app.add_subcommand("run", "Simulate a mapped network on one input");
    run_cmd->add_option("--model", run_model, "Model manifest")->required()->check(CLI::ExistingFile);
    run_cmd->add_option("--plan", run_plan, "Allocation plan")->required()->check(CLI::ExistingFile);
    run_cmd->add_option("--input", run_input, "Input tensor file")->required()->check(CLI::ExistingFile);
    run_cmd->add_option("--steps", steps, "Timesteps")->check(CLI::PositiveNumber);
    run_cmd->add_option("--encode", encode_mode, "Spike encoding")->check(CLI::IsMember({"rate", "threshold"}));
    run_cmd->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
    run_cmd->add_option("--leak", leak, "Per-step leak factor in [0, 1]")->check(CLI::Range(0.0, 1.0));
    run_cmd->add_option("--u-rst", u_rst, "Reset potential");

    // learn
    std::string learn_model, learn_plan, samples_dir, class_name;
    std::size_t k = 2;
    std::size_t slots = 3;
    auto* learn_cmd = app.add_subcommand("learn", "Few-shot learn a new class into the last layer");
    learn_cmd->add_option("--model", learn_model, "Model manifest")->required()->check(CLI::ExistingFile);
    learn_cmd->add_option("--plan", learn_plan, "Allocation plan")->required()->check(CLI::ExistingFile);
    learn_cmd->add_option("--samples", samples_dir, "Directory of .bin sample tensors")->required()->check(CLI::ExistingDirectory);
    learn_cmd->add_option("--class-name", class_name, "Label of the new class")->required();
    learn_cmd->add_option("--k", k, "Neurons per class")->check(CLI::PositiveNumber);
    learn_cmd->add_option("--slots", slots, "New class slots");
    learn_cmd->add_option("--steps", steps, "Timesteps")->check(CLI::PositiveNumber);
    learn_cmd->add_option("--encode", encode_mode, "Spike encoding")->check(CLI::IsMember({"rate", "threshold"}));

    // report
    std::string report_stats, report_plan, workload = "image";
    std::optional<double> accuracy;
    auto* report_cmd = app.add_subcommand("report", "Estimate latency, power and energy of a run");
    report_cmd->add_option("--stats", report_stats, "Run statistics JSON")->required()->check(CLI::ExistingFile);
    report_cmd->add_option("--plan", report_plan, "Allocation plan")->required()->check(CLI::ExistingFile);
    report_cmd->add_option("--workload", workload, "Workload label (image, video, keyword, ...)");
    report_cmd->add_option("--accuracy", accuracy, "Measured accuracy fraction to include");

    // pipeline
    PipelineConfig pc;
    std::string pipe_model, pipe_input, pipe_out = "pipeline_out", requirements, pipe_samples;
    std::optional<std::size_t> label;
    bool do_learn = false;
    auto* pipe_cmd = app.add_subcommand("pipeline", "analyze -> map -> [learn] -> run -> report");
    pipe_cmd->add_option("--model", pipe_model, "Model manifest")->required()->check(CLI::ExistingFile);
    pipe_cmd->add_option("--input", pipe_input, "Input tensor file (synthetic from --seed when omitted)")
        ->check(CLI::ExistingFile);
    pipe_cmd->add_option("--steps", steps, "Timesteps")->check(CLI::PositiveNumber);
    pipe_cmd->add_option("--encode", encode_mode, "Spike encoding")->check(CLI::IsMember({"rate", "threshold"}));
    pipe_cmd->add_option("--out-dir", pipe_out, "Directory for compat/plan/stats/report files");
    pipe_cmd->add_option("--requirements", requirements, "Preset (image|video|keyword) or lat_ms=X,power_mw=Y");
    pipe_cmd->add_option("--workload", workload, "Workload label");
    pipe_cmd->add_option("--label", label, "Expected class of the input");
    pipe_cmd->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
    pipe_cmd->add_option("--rank", rank, "Ranking key")->check(CLI::IsMember({"accuracy", "npu"}));
    pipe_cmd->add_flag("--learn", do_learn, "Insert the on-chip learning stage");
    pipe_cmd->add_option("--samples", pipe_samples, "Samples for --learn")->check(CLI::ExistingDirectory);
    pipe_cmd->add_option("--class-name", class_name, "New class label for --learn");
    pipe_cmd->add_option("--k", k, "Neurons per class for --learn")->check(CLI::PositiveNumber);
    pipe_cmd->add_option("--slots", slots, "New class slots for --learn");

    try {
        app.parse(argc, const_cast<char**>(argv));
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kError;
    }

    const std::optional<fs::path> chip_opt = chip_path.empty() ? std::nullopt : std::optional<fs::path>(chip_path);
    try {
        if (*analyze_cmd) {
            const auto chip = resolve_chip(chip_opt);
            if (analyze_models.size() == 1) {
                const auto model = load_model(analyze_models.front());
                const auto report = analyze(model, chip);
                out << format_compat_table(report);
                if (!out_path.empty()) write_json(compat_to_json(report), out_path);
                return report.compatible ? kOk : kIncompatible;
            }
            std::vector<NetworkModel> models;
            for (const auto& p : analyze_models) models.push_back(load_model(p));
            try {
                const auto sel = select_networks(models, chip, parse_ranking_key(rank));
                const auto doc = selection_to_json(sel);
                out << doc.dump(2) << '\n';
                if (!out_path.empty()) write_json(doc, out_path);
                return kOk;
            } catch (const EmptySelection& e) {
                err << e.what() << '\n';
                return kIncompatible;
            }
        }
        if (*map_cmd) {
            if (out_path.empty()) throw ValidationError("map requires --out");
            const auto chip = resolve_chip(chip_opt);
            const auto model = load_model(map_model);
            if (!analyze(model, chip).compatible) {
                err << "model '" << model.name << "' is not compatible with chip '" << chip.name << "'\n";
                return kIncompatible;
            }
            const auto plan = map(model, chip);
            write_json(plan_to_json(plan), out_path);
            out << "cost C = " << plan.cost_c << " NPUs, utilization U = " << plan.utilization.to_string() << "%\n";
            return kOk;
        }
        if (*run_cmd) {
            const auto chip = resolve_chip(chip_opt);
            const auto model = load_model(run_model);
            const auto plan = load_plan(run_plan, chip);
            const auto input = read_input_tensor(run_input);
            RunParams params;
            params.timesteps = steps;
            params.workers = workers;
            params.leak = Leak::from_ratio(leak);
            params.u_rst = u_rst;
            const auto stats = run(model, plan, encode(input, steps, parse_encode_mode(encode_mode)), params);
            const auto doc = stats_to_json(stats);
            if (!out_path.empty()) {
                write_json(doc, out_path);
            } else {
                out << doc.dump(2) << '\n';
            }
            return kOk;
        }
        if (*learn_cmd) {
            const auto chip = resolve_chip(chip_opt);
            const auto model = load_model(learn_model);
            const auto plan = load_plan(learn_plan, chip);
            LearnSettings s{class_name, k, slots, parse_encode_mode(encode_mode), steps, 1};
            auto outcome = learn_from_samples(model, plan, samples_dir, s);
            const fs::path dest = out_path.empty() ? fs::path(learn_model) : fs::path(out_path);
            if (!out_path.empty()) outcome.model.weight_blob = dest.stem().string() + ".bin";
            save_model(outcome.model, dest);
            out << "learned class '" << class_name << "' into slot " << outcome.class_slot << " from "
                << outcome.samples << " samples; manifest written to " << dest.string() << '\n';
            return kOk;
        }
        if (*report_cmd) {
            if (out_path.empty()) throw ValidationError("report requires --out");
            const auto chip = resolve_chip(chip_opt);
            const auto stats = load_stats(report_stats);
            const auto plan = load_plan(report_plan, chip);
            auto report = estimate(stats, plan, chip, workload);
            report.accuracy = accuracy;
            ReportFormat fmt = parse_report_format(format);
            if (fs::path(out_path).extension() == ".csv") fmt = ReportFormat::Csv;
            write_report(report, out_path, fmt);
            out << format_summary(report);
            return kOk;
        }
        if (*pipe_cmd) {
            pc.model_path = pipe_model;
            pc.chip_path = chip_opt;
            if (!pipe_input.empty()) pc.input_path = pipe_input;
            pc.encode_mode = parse_encode_mode(encode_mode);
            pc.timesteps = steps;
            pc.output_dir = pipe_out;
            pc.ranking_key = parse_ranking_key(rank);
            pc.seed = seed;
            pc.workload = workload;
            if (!requirements.empty()) pc.requirements = parse_requirements(requirements);
            pc.label = label;
            pc.workers = workers;
            pc.learn = do_learn;
            if (do_learn && (pipe_samples.empty() || class_name.empty())) {
                throw ValidationError("--learn needs --samples and --class-name");
            }
            pc.samples_dir = pipe_samples;
            pc.class_name = class_name;
            pc.neurons_per_class = k;
            pc.new_slots = slots;
            return run_pipeline(pc, out, err).exit_code;
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kError;
    }
    return kError;
}

}  // namespace npu::cli
