// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers as
// arguments to run a subset.
#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

#include "lei/config.hpp"
#include "lei/folds.hpp"
#include "lei/harness.hpp"
#include "lei/interpret.hpp"
#include "lei/losses.hpp"
#include "lei/metrics.hpp"
#include "lei/parallel.hpp"
#include "lei/preprocess.hpp"
#include "lei/synth.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <thread>

#ifndef LEI_CLI_PATH
#error "LEI_CLI_PATH must point at the lei executable"
#endif

namespace fs = std::filesystem;
using namespace lei;

namespace {

constexpr double kGradTolerance = 1e-5;
constexpr double kGradSeconds = 60.0;
constexpr int kGradSeedsPerPair = 3;
constexpr double kIdentityTolerance = 1e-12;
constexpr double kImputeTolerance = 1e-12;
constexpr int kMacroFVectors = 100;
constexpr int kImputeMatrices = 20;
constexpr int kTrendRepeats = 20;
constexpr int kTrendMajority = 15;
constexpr int kTopK = 10;
constexpr double kNoiseSds = 2.0;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------- 1

Outcome gradient_suite() {
    const auto t0 = std::chrono::steady_clock::now();
    const HeadKind heads[] = {HeadKind::time_distributed_mlp, HeadKind::longitudinal_softmax,
                              HeadKind::time_dependent_per_step};
    const LossKind kinds[] = {LossKind::cce, LossKind::weighted_cce, LossKind::dwcce};
    double worst = 0.0;
    int instances = 0;
    std::uint64_t seed = 100;
    for (auto head : heads)
        for (auto kind : kinds)
            for (int k = 0; k < kGradSeedsPerPair; ++k) {
                const int samples = 1 + static_cast<int>(seed % 4);
                auto g = lei::testing::random_instance(seed++, head, kind, samples, 4, 8, {5, 4});
                auto model = initialize_stacker(g.config);
                worst = std::max(worst, lei::testing::max_relative_error(model, g));
                ++instances;
            }
    const double secs = seconds_since(t0);
    return {worst <= kGradTolerance && instances >= 20 && secs < kGradSeconds,
            fmt("max relative error %.2e over %d instances (2-layer LSTM, 3 heads x 3 losses), %.1f s", worst, instances,
                secs)};
}

// ---------------------------------------------------------------- 2

Outcome loss_identities() {
    Rng rng(2);
    std::uniform_real_distribution<double> u(0.01, 1.0);
    double dw_gap = 0.0, uniform_gap = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const int C = 2 + trial % 4, T = 1 + trial % 5, N = 1 + trial % 7;
        Eigen::MatrixXi y(N, T);
        StepProbabilities p(static_cast<std::size_t>(T), Eigen::MatrixXd(N, C));
        for (int t = 0; t < T; ++t)
            for (int s = 0; s < N; ++s) {
                const int label = static_cast<int>(rng() % static_cast<std::uint64_t>(C));
                y(s, t) = label;
                Eigen::RowVectorXd row(C);
                for (int c = 0; c < C; ++c) row(c) = u(rng);
                row(label) = row.maxCoeff() + 0.5;
                p[static_cast<std::size_t>(t)].row(s) = row / row.sum();
            }
        LossSpec cce{LossKind::cce, {}, C};
        LossSpec dw{LossKind::dwcce, Eigen::MatrixXd::Ones(T, C), C};
        dw_gap = std::max(dw_gap, std::abs(loss(dw, p, y) - loss(cce, p, y)));

        StepProbabilities flat(static_cast<std::size_t>(T), Eigen::MatrixXd::Constant(N, C, 1.0 / C));
        uniform_gap = std::max(uniform_gap, std::abs(loss(cce, flat, y) - T * std::log(static_cast<double>(C))));
    }

    double lo = 2.0, hi = 1.0;
    bool formula = true;
    int pairs = 0;
    for (int C = 2; C <= 5; ++C)
        for (int best = 0; best < C; ++best)
            for (int truth = 0; truth < C; ++truth) {
                Eigen::RowVectorXd row = Eigen::RowVectorXd::Constant(C, 0.5 / C);
                row(best) += 0.5;
                const double w = ordinal_weight(row, truth, C);
                lo = std::min(lo, w);
                hi = std::max(hi, w);
                formula &= w == 1.0 + std::abs(best - truth) / static_cast<double>(C - 1);
                ++pairs;
            }
    const bool pass = dw_gap <= kIdentityTolerance && uniform_gap <= kIdentityTolerance && lo >= 1.0 && hi <= 2.0 && formula;
    return {pass, fmt("|DWCCE-CCE| %.1e, |uniform CCE - T log C| %.1e, ordinal weight in [%g, %g] over %d pairs", dw_gap,
                      uniform_gap, lo, hi, pairs)};
}

// ---------------------------------------------------------------- 5

Outcome oracles() {
    Rng rng(5);
    int f_mismatch = 0;
    for (int v = 0; v < kMacroFVectors; ++v) {
        const int C = 2 + v % 4;
        const int n = 1 + static_cast<int>(rng() % 40);
        std::vector<int> pred(static_cast<std::size_t>(n)), truth(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            pred[static_cast<std::size_t>(i)] = static_cast<int>(rng() % static_cast<std::uint64_t>(C));
            truth[static_cast<std::size_t>(i)] = static_cast<int>(rng() % static_cast<std::uint64_t>(C));
        }
        double sum = 0.0;
        for (int c = 0; c < C; ++c) {
            int tp = 0, fp = 0, fn = 0;
            for (int i = 0; i < n; ++i) {
                const bool p = pred[static_cast<std::size_t>(i)] == c, t = truth[static_cast<std::size_t>(i)] == c;
                tp += p && t;
                fp += p && !t;
                fn += !p && t;
            }
            sum += tp == 0 ? 0.0 : 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
        }
        f_mismatch += macro_f_measure(pred, truth, C) != sum / C;
    }

    std::normal_distribution<double> z(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    int matrices = 0;
    for (int trial = 0; matrices < kImputeMatrices; ++trial) {
        const int rows = 3 + trial % 6, cols = 1 + trial % 6;
        MaskedMatrix m(Eigen::MatrixXd(rows, cols));
        for (Eigen::Index k = 0; k < m.values.size(); ++k) {
            m.values(k) = z(rng);
            if (u(rng) < 0.25) {
                m.observed(k) = false;
                m.values(k) = 0.0;
            }
        }
        const int k = 1 + trial % 3;
        auto want = lei::testing::brute_force_impute(m, m, k);
        if (!want) continue;
        worst = std::max(worst, (knn_impute(m, m, k) - *want).cwiseAbs().maxCoeff());
        ++matrices;
    }
    return {f_mismatch == 0 && worst <= kImputeTolerance,
            fmt("macro F mismatches %d/%d; KNN imputation max gap %.1e over %d matrices", f_mismatch, kMacroFVectors,
                worst, matrices)};
}

// ---------------------------------------------------------------- 3, 4, 6, 7

ExperimentConfig trend_experiment(const GeneratedCohort& g) {
    auto e = default_experiment_config();
    e.preprocess.one_hot = g.one_hot;
    e.predictors = {knn_spec(15), logistic_spec({0.5, 100, 1e-4}), forest_spec({20, 6, 3})};
    e.repeats = kTrendRepeats;
    e.seed = 2024;
    return e;
}

struct TrendRun {
    GeneratedCohort generated;
    ExperimentConfig config;
    MetricsReport report;
    double seconds = 0.0;
};

TrendRun run_trend(const std::string& preset, const std::vector<Method>& methods) {
    TrendRun r{generate_with_latent(generator_preset(preset)), {}, {}, 0.0};
    r.config = trend_experiment(r.generated);
    const auto t0 = std::chrono::steady_clock::now();
    r.report = run_methods(r.generated.cohort, r.config, methods);
    r.seconds = seconds_since(t0);
    return r;
}

const MethodMetrics& metrics_of(const MetricsReport& r, const std::string& name) {
    for (const auto& m : r.methods)
        if (m.method == name) return m;
    throw std::runtime_error("missing method " + name);
}

Outcome leakage(const TrendRun& run) {
    const auto& cohort = run.generated.cohort;
    const auto N = cohort.samples();
    std::size_t plan_violations = 0;
    for (int r = 0; r < run.config.repeats; ++r) {
        auto plan = make_fold_plan(cohort, run.config, r);
        std::vector<int> tested(N, 0);
        for (int k = 0; k < run.config.outer_folds; ++k) {
            auto test = fold_members(plan.outer, k);
            auto train = fold_complement(plan.outer, k);
            for (auto s : test) ++tested[s];
            const auto& inner = plan.inner[static_cast<std::size_t>(k)];
            if (inner.size() != train.size()) {
                ++plan_violations;
                continue;
            }
            std::vector<int> predicted(train.size(), 0);
            for (int j = 0; j < run.config.inner_folds; ++j)
                for (auto i : fold_members(inner, j)) ++predicted[i];
            for (int c : predicted) plan_violations += c != 1;

            auto a = subset_by_indices(cohort, train), b = subset_by_indices(cohort, test);
            std::set<std::string> ids(a.sample_ids().begin(), a.sample_ids().end());
            for (const auto& id : b.sample_ids()) plan_violations += ids.count(id);
            plan_violations += a.times() != cohort.times() || b.times() != cohort.times();
            plan_violations += a.samples() + b.samples() != N;
        }
        for (int c : tested) plan_violations += c != 1;
    }
    const auto& audit = run.report.audit;
    const std::size_t total = plan_violations + audit.inner_violations + audit.outer_violations;
    return {total == 0, fmt("%zu violations (fold plans %zu, inner coverage %zu, outer coverage %zu) over %zu units",
                            total, plan_violations, audit.inner_violations, audit.outer_violations, audit.units)};
}

Outcome model_counts(const TrendRun& run) {
    const auto& c = run.generated.cohort;
    const std::size_t T = c.times(), M = c.modalities().size(), A = run.config.predictors.size();
    const auto& audit = run.report.audit;
    return {audit.time_dependent_models == T * M * A && audit.time_distributed_models == M * A,
            fmt("time-dependent %zu (T*M*A = %zu), time-distributed %zu (M*A = %zu)", audit.time_dependent_models,
                T * M * A, audit.time_distributed_models, M * A)};
}

std::vector<double> group_mean(const MetricsReport& r, const char* a, const char* b, std::size_t t) {
    const auto& x = metrics_of(r, a).macro_f;
    const auto& y = metrics_of(r, b).macro_f;
    std::vector<double> out;
    for (std::size_t i = 0; i < x.size(); ++i) out.push_back(0.5 * (x[i][t] + y[i][t]));
    return out;
}

Outcome accumulation_trend(const TrendRun& run) {
    const auto& r = run.report;
    const std::size_t first = 0, last = r.time_points.size() - 1;
    auto L0 = group_mean(r, "config2", "config4", first), M0 = group_mean(r, "config1", "config3", first);
    auto L1 = group_mean(r, "config2", "config4", last), M1 = group_mean(r, "config1", "config3", last);
    int lower = 0, higher = 0;
    for (std::size_t i = 0; i < L0.size(); ++i) {
        lower += L0[i] < M0[i];
        higher += L1[i] > M1[i];
    }
    const double l0 = median(L0), m0 = median(M0), l1 = median(L1), m1 = median(M1);
    const bool pass = l0 < m0 && l1 > m1 && lower >= kTrendMajority && higher >= kTrendMajority;
    return {pass, fmt("%s: longitudinal %.3f vs MLP %.3f, lower in %d/%d; %s: longitudinal %.3f vs MLP %.3f, higher in "
                      "%d/%d; %.0f s",
                      r.time_points[first].c_str(), l0, m0, lower, kTrendRepeats, r.time_points[last].c_str(), l1, m1,
                      higher, kTrendRepeats, run.seconds)};
}

Outcome interaction_trend(const TrendRun& run) {
    const auto& r = run.report;
    const auto& best = metrics_of(r, "config4");
    const auto& ef = metrics_of(r, "early_fusion_mlp");
    const std::size_t T = r.time_points.size();
    bool pass = true;
    std::string detail;
    for (std::size_t t = T - 2; t < T; ++t) {
        std::vector<double> diff;
        for (std::size_t i = 0; i < best.macro_f.size(); ++i) diff.push_back(best.macro_f[i][t] - ef.macro_f[i][t]);
        const double d = median(diff);
        pass &= best.median[t] > ef.median[t] && d > 0.0;
        detail += fmt("%s: config4 %.3f vs early fusion %.3f, median paired diff %+.3f; ", r.time_points[t].c_str(),
                      best.median[t], ef.median[t], d);
    }
    detail += fmt("%.0f s", run.seconds);
    return {pass, detail};
}

// ---------------------------------------------------------------- 8

Outcome interpretation() {
    const auto t0 = std::chrono::steady_clock::now();
    auto g = generate_with_latent(generator_preset("planted"));
    auto cfg = default_interpret_config();
    cfg.preprocess.one_hot = g.one_hot;
    cfg.top_k = kTopK;
    auto table = interpret_cohort(g.cohort, cfg);
    const auto eligible = eligible_times(g.cohort);
    bool pass = table.times.size() == eligible.size() && !eligible.empty();
    std::string ranks, noise;
    for (const auto& tr : table.times) {
        int rank = 0;
        for (const auto& f : tr.features) {
            if (f.feature == "signal_000") rank = f.rank;
            if (f.feature == "noise_a_000") {
                const bool ok = std::abs(f.importance) <= kNoiseSds * f.importance_sd;
                pass &= ok;
                noise += fmt(" %+.4f(sd %.4f)", f.importance, f.importance_sd);
            }
        }
        pass &= rank >= 1 && rank <= kTopK;
        ranks += fmt(" %d", rank);
    }
    int links = 0;
    for (std::size_t i = 0; i + 1 < table.times.size(); ++i)
        for (const auto& l : table.links)
            links += l.feature == "signal_000" && l.from == table.times[i].time_point &&
                     l.to == table.times[i + 1].time_point;
    pass &= links == static_cast<int>(table.times.size()) - 1;
    return {pass, fmt("signal_000 ranks%s, %d/%zu links; noise_a_000 importance%s; %.0f s", ranks.c_str(), links,
                      table.times.size() - 1, noise.c_str(), seconds_since(t0))};
}

// ---------------------------------------------------------------- 9

const char* kCliConfig = R"({
  "cohort": {"generator": {"preset": "planted", "n_samples": 150, "time_point_count": 4,
             "target_proportions": [[0.5, 0.5, 0.0], [0.45, 0.45, 0.1], [0.4, 0.42, 0.18], [0.35, 0.4, 0.25]]}},
  "predictors": [{"algorithm": "knn", "k": 5},
                 {"algorithm": "multinomial_logistic", "epochs": 50, "learning_rate": 0.5},
                 {"algorithm": "random_forest", "trees": 8, "max_depth": 4}],
  "stacker": {"hidden_sizes": [8], "mlp_hidden": 8, "epochs": 20, "learning_rate": 0.01},
  "experiment": {"configurations": [1, 2, 3, 4, "early_fusion_mlp", "early_fusion_longitudinal"],
                 "repeats": 3, "outer_folds": 3, "inner_folds": 3, "seed": 9},
  "interpret": {"inner_folds": 3, "permutation_repeats": 3}
})";

int run_cli(const std::string& args) {
    std::string cmd = std::string(LEI_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome determinism() {
    lei::testing::TempDir dir("acceptance_cli");
    {
        std::ofstream f(dir.path / "config.json");
        f << kCliConfig;
    }
    const std::map<std::string, std::vector<std::string>> tables = {
        {"synth", {"cohort.csv", "schema.json"}},
        {"run", {"repeats.csv", "summary.csv", "summary.json"}},
        {"compare", {"repeats.csv", "summary.csv", "summary.json"}},
        {"interpret", {"importance.csv", "trajectories.csv"}},
    };
    int failures = 0, compared = 0;
    std::string bad;
    for (const auto& [cmd, files] : tables) {
        const auto first = dir.path / (cmd + "_first");
        if (run_cli(cmd + " -c " + (dir.path / "config.json").string() + " -o " + first.string() + " --threads 1") != 0) {
            ++failures;
            bad += " " + cmd + "(exit)";
            continue;
        }
        for (int threads : {1, 8}) {
            const auto again = dir.path / (cmd + "_" + std::to_string(threads));
            if (run_cli(cmd + " -c " + (first / "manifest.json").string() + " -o " + again.string() + " --threads " +
                        std::to_string(threads)) != 0) {
                ++failures;
                bad += " " + cmd + "(rerun exit)";
                continue;
            }
            for (const auto& f : files) {
                ++compared;
                const auto a = slurp(first / f);
                if (a.empty() || a != slurp(again / f)) {
                    ++failures;
                    bad += " " + cmd + "/" + f + "@" + std::to_string(threads);
                }
            }
        }
    }
    return {failures == 0, fmt("%d/%d table comparisons byte-identical across manifest reruns at 1 and 8 threads%s%s",
                               compared - failures, compared, bad.empty() ? "" : "; differing:", bad.c_str())};
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
    auto want = [&](int id) { return wanted.empty() || wanted.count(id) > 0; };
    if (!std::getenv("LEI_THREADS")) set_thread_count(std::max(1u, std::thread::hardware_concurrency()));

    int failed = 0;
    auto emit = [&](int id, const char* name, const Outcome& o) {
        std::printf("criterion %d %s: %s  %s\n", id, name, o.pass ? "PASS" : "FAIL", o.detail.c_str());
        std::fflush(stdout);
        failed += !o.pass;
    };
    auto guarded = [](const std::function<Outcome()>& f) -> Outcome {
        try {
            return f();
        } catch (const std::exception& e) {
            return {false, std::string("error: ") + e.what()};
        }
    };

    if (want(1)) emit(1, "gradient suite", guarded(gradient_suite));
    if (want(2)) emit(2, "loss identities", guarded(loss_identities));

    std::optional<TrendRun> accumulating;
    std::string trend_error;
    if (want(3) || want(4) || want(6)) {
        try {
            accumulating = run_trend("default", {lei_configuration(1), lei_configuration(2), lei_configuration(3),
                                                 lei_configuration(4)});
        } catch (const std::exception& e) {
            trend_error = std::string("error: ") + e.what();
        }
    }
    auto on_trend = [&](auto check) -> Outcome {
        if (!accumulating) return {false, trend_error};
        return guarded([&] { return check(*accumulating); });
    };
    if (want(3)) emit(3, "leakage suite", on_trend(leakage));
    if (want(4)) emit(4, "model counts", on_trend(model_counts));
    if (want(5)) emit(5, "oracle equivalences", guarded(oracles));
    if (want(6)) emit(6, "accumulating-signal trend", on_trend(accumulation_trend));
    if (want(7))
        emit(7, "interaction trend", guarded([] {
                 return interaction_trend(
                     run_trend("interaction", {lei_configuration(4), early_fusion_baseline(HeadKind::time_distributed_mlp)}));
             }));
    if (want(8)) emit(8, "interpretation sanity", guarded(interpretation));
    if (want(9)) emit(9, "determinism", guarded(determinism));
    return failed == 0 ? 0 : 1;
}
