#include "lei/config.hpp"
#include "lei/errors.hpp"
#include "lei/parallel.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iostream>

#ifndef LEI_VERSION
#define LEI_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using namespace lei;

namespace {

struct Common {
    std::string config;
    std::string out = ".";
    int threads = 0;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("-c,--config", c.config, "JSON config file or a previous manifest")->required();
    cmd->add_option("-o,--out", c.out, "output directory");
    cmd->add_option("--threads", c.threads, "worker threads (default: LEI_THREADS or 1)")->check(CLI::PositiveNumber);
}

fs::path prepare(const Common& c) {
    if (c.threads > 0) set_thread_count(c.threads);
    fs::path out(c.out);
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw IoError("cannot create output directory " + out.string() + ": " + ec.message());
    return out;
}

void write_manifest(const fs::path& out, const std::string& command, const RunConfig& cfg,
                    const std::vector<std::string>& outputs, double seconds) {
    Json seeds = {{"experiment", cfg.experiment.seed}, {"interpret", cfg.interpret.seed}};
    if (cfg.cohort.generator) seeds["generator"] = cfg.cohort.generator->seed;
    Json m = {{"tool", "lei"},
              {"version", LEI_VERSION},
              {"command", command},
              {"config", to_json(cfg)},
              {"seeds", seeds},
              {"outputs", outputs},
              {"threads", thread_count()},
              {"timings", {{"wall_seconds", seconds}}}};
    std::ofstream f(out / "manifest.json");
    if (!f) throw IoError("cannot write " + (out / "manifest.json").string());
    f << m.dump(2) << '\n';
}

double since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void report_warnings(const MetricsReport& r) {
    if (!r.audit.warnings.empty())
        std::cerr << "warning: " << r.audit.warnings.size() << " degenerate-fold notices (see summary.json)\n";
    if (r.audit.inner_violations || r.audit.outer_violations)
        throw NumericError("leakage audit failed: " + std::to_string(r.audit.inner_violations) + " inner, " +
                           std::to_string(r.audit.outer_violations) + " outer violations");
}

std::vector<std::string> write_report(const MetricsReport& r, const fs::path& out) {
    write_repeat_table(r, out / "repeats.csv");
    write_summary_table(r, out / "summary.csv");
    write_summary_json(r, out / "summary.json");
    return {"repeats.csv", "summary.csv", "summary.json"};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Longitudinal ensemble integration: synthesize cohorts, run and compare stacking configurations, "
                 "and rank features over time."};
    app.require_subcommand(1);
    app.set_version_flag("--version", LEI_VERSION);

    Common synth_opts, run_opts, compare_opts, interpret_opts;
    std::optional<std::uint64_t> synth_seed, run_seed, compare_seed, interpret_seed;
    std::optional<int> run_repeats, compare_repeats, top_k;
    std::string configuration;
    std::vector<std::string> configurations;

    auto* synth = app.add_subcommand("synth", "generate a synthetic cohort");
    add_common(synth, synth_opts);
    synth->add_option("--seed", synth_seed, "generator seed");

    auto* run = app.add_subcommand("run", "nested cross-validation of one configuration");
    add_common(run, run_opts);
    run->add_option("--configuration", configuration, "1-4, config1-config4, early_fusion_mlp or early_fusion_longitudinal");
    run->add_option("--repeats", run_repeats)->check(CLI::PositiveNumber);
    run->add_option("--seed", run_seed, "experiment seed");

    auto* compare = app.add_subcommand("compare", "paired comparison of configurations and baselines");
    add_common(compare, compare_opts);
    compare->add_option("--configurations", configurations, "methods to compare")->delimiter(',');
    compare->add_option("--repeats", compare_repeats)->check(CLI::PositiveNumber);
    compare->add_option("--seed", compare_seed, "experiment seed");

    auto* interpret = app.add_subcommand("interpret", "per-time feature rankings and trajectories");
    add_common(interpret, interpret_opts);
    interpret->add_option("-k,--k", top_k, "features kept per time point")->check(CLI::PositiveNumber);
    interpret->add_option("--seed", interpret_seed, "permutation seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    const auto t0 = std::chrono::steady_clock::now();
    try {
        if (*synth) {
            auto cfg = load_run_config(synth_opts.config);
            if (!cfg.cohort.generator) throw ValidationError("cohort.generator: synth needs a generator config");
            if (synth_seed) cfg.cohort.generator->seed = *synth_seed;
            const auto out = prepare(synth_opts);
            auto g = generate_with_latent(*cfg.cohort.generator);
            export_cohort(g.cohort, out / "cohort.csv");
            save_schema(schema_of(g.cohort, g.one_hot), out / "schema.json");
            write_manifest(out, "synth", cfg, {"cohort.csv", "schema.json"}, since(t0));
            std::cout << "wrote " << g.cohort.samples() << " samples, " << g.cohort.modalities().size() << " modalities to "
                      << (out / "cohort.csv").string() << '\n';
        } else if (*run) {
            auto cfg = load_run_config(run_opts.config);
            if (!configuration.empty()) cfg.methods = {method_from_string(configuration)};
            cfg.methods.resize(1);
            if (run_repeats) cfg.experiment.repeats = *run_repeats;
            if (run_seed) cfg.experiment.seed = *run_seed;
            cfg.experiment.validate();
            const auto out = prepare(run_opts);
            auto loaded = resolve_cohort(cfg);
            auto report = run_methods(loaded.cohort, cfg.experiment, cfg.methods);
            report_warnings(report);
            write_manifest(out, "run", cfg, write_report(report, out), since(t0));
            const auto& m = report.methods.front();
            for (std::size_t t = 0; t < report.time_points.size(); ++t)
                std::cout << m.method << ' ' << report.time_points[t] << " median " << m.median[t] << " se "
                          << m.standard_error[t] << '\n';
        } else if (*compare) {
            auto cfg = load_run_config(compare_opts.config);
            if (!configurations.empty()) {
                cfg.methods.clear();
                for (const auto& c : configurations) cfg.methods.push_back(method_from_string(c));
            }
            if (compare_repeats) cfg.experiment.repeats = *compare_repeats;
            if (compare_seed) cfg.experiment.seed = *compare_seed;
            cfg.experiment.validate();
            const auto out = prepare(compare_opts);
            auto loaded = resolve_cohort(cfg);
            auto report = run_methods(loaded.cohort, cfg.experiment, cfg.methods);
            report_warnings(report);
            write_manifest(out, "compare", cfg, write_report(report, out), since(t0));
            std::cout << "configuration";
            for (const auto& t : report.time_points) std::cout << ',' << t;
            std::cout << '\n';
            for (const auto& m : report.methods) {
                std::cout << m.method;
                for (std::size_t t = 0; t < m.median.size(); ++t) std::cout << ',' << m.median[t] << "+-" << m.standard_error[t];
                std::cout << '\n';
            }
        } else if (*interpret) {
            auto cfg = load_run_config(interpret_opts.config);
            if (top_k) cfg.interpret.top_k = *top_k;
            if (interpret_seed) cfg.interpret.seed = *interpret_seed;
            cfg.interpret.validate();
            const auto out = prepare(interpret_opts);
            auto loaded = resolve_cohort(cfg);
            auto table = interpret_cohort(loaded.cohort, cfg.interpret);
            write_importance_table(table, out / "importance.csv");
            write_trajectory_links(table, out / "trajectories.csv");
            write_manifest(out, "interpret", cfg, {"importance.csv", "trajectories.csv"}, since(t0));
            std::cout << "ranked " << table.times.size() << " time points, " << table.links.size() << " trajectory links\n";
        }
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
