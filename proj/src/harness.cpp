#include "lei/harness.hpp"

#include "lei/errors.hpp"
#include "lei/folds.hpp"
#include "lei/parallel.hpp"
#include "lei/random.hpp"
#include "lei/text_io.hpp"

#include <json.hpp>

#include <fstream>

namespace lei {

Method lei_configuration(int id) {
    switch (id) {
        case 1: return {"config1", false, BpRegime::time_dependent, HeadKind::time_distributed_mlp};
        case 2: return {"config2", false, BpRegime::time_dependent, HeadKind::longitudinal_softmax};
        case 3: return {"config3", false, BpRegime::time_distributed, HeadKind::time_distributed_mlp};
        case 4: return {"config4", false, BpRegime::time_distributed, HeadKind::longitudinal_softmax};
        default: throw ValidationError("unknown configuration id " + std::to_string(id) + " (expected 1-4)");
    }
}

Method early_fusion_baseline(HeadKind head) {
    if (head == HeadKind::time_distributed_mlp) return {"early_fusion_mlp", true, BpRegime::time_dependent, head};
    if (head == HeadKind::longitudinal_softmax) return {"early_fusion_longitudinal", true, BpRegime::time_dependent, head};
    throw ValidationError("early-fusion baselines use the MLP or longitudinal head");
}

Method method_from_string(const std::string& name) {
    if (name.size() == 1 && name[0] >= '0' && name[0] <= '9') return lei_configuration(name[0] - '0');
    if (name.rfind("config", 0) == 0 && name.size() == 7) return lei_configuration(name[6] - '0');
    if (name == "early_fusion_mlp") return early_fusion_baseline(HeadKind::time_distributed_mlp);
    if (name == "early_fusion_longitudinal") return early_fusion_baseline(HeadKind::longitudinal_softmax);
    throw ValidationError("unknown configuration '" + name + "'");
}

void ExperimentConfig::validate() const {
    preprocess.validate();
    if (predictors.empty()) throw ValidationError("predictors: at least one base predictor required");
    for (const auto& p : predictors) p.validate();
    for (std::size_t i = 0; i < predictors.size(); ++i)
        for (std::size_t j = i + 1; j < predictors.size(); ++j)
            if (predictors[i].name() == predictors[j].name())
                throw ValidationError("predictors: duplicate label '" + predictors[i].name() + "'");
    if (repeats < 1) throw ValidationError("repeats must be at least 1");
    if (outer_folds < 2) throw ValidationError("outer_folds must be at least 2");
    if (inner_folds < 2) throw ValidationError("inner_folds must be at least 2");
    if (stacker.hidden_sizes.empty()) throw ValidationError("stacker.hidden_sizes must name at least one layer");
    auto probe = stacker;
    probe.input_width = 1;
    probe.class_count = 2;
    probe.head = HeadKind::time_distributed_mlp;
    probe.validate();
}

std::vector<PredictorSpec> default_predictors() {
    return {knn_spec(15), logistic_spec(), forest_spec()};
}

ExperimentConfig default_experiment_config() {
    ExperimentConfig c;
    c.predictors = default_predictors();
    return c;
}

StackerConfig stacker_for(const ExperimentConfig& config, const Method& method, int input_width, int class_count) {
    auto s = config.stacker;
    s.input_width = input_width;
    s.class_count = class_count;
    s.head = method.head;
    if (method.head == HeadKind::longitudinal_softmax) s.hidden_sizes.push_back(class_count);
    return s;
}

FoldPlan make_fold_plan(const LongitudinalCohort& cohort, const ExperimentConfig& config, int repeat) {
    FoldPlan plan;
    plan.repeat = repeat;
    plan.seed = derive_seed(config.seed, {static_cast<std::uint64_t>(repeat)});
    const auto T = cohort.times();
    auto final_labels = cohort.labels_at(T);
    plan.outer = stratified_folds(final_labels, config.outer_folds, derive_seed(plan.seed, {0}));
    const auto last_input = cohort.labels_at(T - 1);
    for (int k = 0; k < config.outer_folds; ++k) {
        std::vector<int> strata;
        for (auto s : fold_complement(plan.outer, k)) strata.push_back(last_input[s]);
        plan.inner.push_back(stratified_folds(strata, config.inner_folds, derive_seed(plan.seed, {1, static_cast<std::uint64_t>(k)})));
    }
    return plan;
}

Sequence early_fusion_inputs(const LongitudinalCohort& cohort) {
    const auto width = static_cast<Eigen::Index>(cohort.total_features());
    const auto N = static_cast<Eigen::Index>(cohort.samples());
    Sequence out;
    for (std::size_t t = 0; t < cohort.times(); ++t) {
        Eigen::MatrixXd x(N, width);
        Eigen::Index at = 0;
        for (const auto& m : cohort.modalities()) {
            const auto f = static_cast<Eigen::Index>(m.features());
            x.middleCols(at, f) = m.slice(t).values;
            at += f;
        }
        out.push_back(std::move(x));
    }
    return out;
}

Eigen::MatrixXi shifted_targets(const LongitudinalCohort& cohort) {
    return cohort.labels().labels.rightCols(static_cast<Eigen::Index>(cohort.times()));
}

namespace {

struct UnitResult {
    std::vector<std::size_t> test_rows;
    std::vector<Eigen::MatrixXi> predictions;  ///< per method: test samples x T
    std::size_t inner_violations = 0;
    std::size_t outer_violations = 0;
    std::size_t time_dependent_models = 0;
    std::size_t time_distributed_models = 0;
    std::size_t unseen = 0;
    std::vector<std::string> warnings;
};

Eigen::MatrixXi argmax_steps(const Sequence& p) {
    Eigen::MatrixXi out(p.empty() ? 0 : p.front().rows(), static_cast<Eigen::Index>(p.size()));
    for (std::size_t t = 0; t < p.size(); ++t) {
        auto a = argmax_rows(p[t]);
        for (std::size_t s = 0; s < a.size(); ++s) out(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(t)) = a[s];
    }
    return out;
}

UnitResult run_unit(const LongitudinalCohort& cohort, const ExperimentConfig& config, const std::vector<Method>& methods,
                    const FoldPlan& plan, int fold) {
    UnitResult u;
    const int C = cohort.class_count();
    const std::string where = "repeat " + std::to_string(plan.repeat) + ", fold " + std::to_string(fold) + ": ";
    auto train_rows = fold_complement(plan.outer, fold);
    u.test_rows = fold_members(plan.outer, fold);

    std::vector<bool> in_train(cohort.samples(), false);
    for (auto r : train_rows) in_train[r] = true;
    for (auto r : u.test_rows) u.outer_violations += in_train[r] ? 1 : 0;
    const auto& inner = plan.inner.at(static_cast<std::size_t>(fold));
    if (inner.size() != train_rows.size()) ++u.inner_violations;

    const auto train = subset_by_indices(cohort, train_rows);
    const auto test = subset_by_indices(cohort, u.test_rows);
    const auto pre = FittedPreprocessor::fit(config.preprocess, train);
    const auto& train_p = pre.transformed_training();
    const auto test_p = pre.transform(test, &u.unseen);

    const Eigen::MatrixXi targets = shifted_targets(train_p);
    const auto distribution = class_weights(targets, C);
    const auto names = train_p.label_time_names();
    for (Eigen::Index t = 0; t < distribution.rows(); ++t)
        for (int c = 0; c < C; ++c)
            if (distribution(t, c) == 0.0)
                u.warnings.push_back(where + "class " + train_p.labels().class_names[c] + " absent from training labels at " +
                                     names[t + 1]);
    LossSpec loss{config.loss, config.loss == LossKind::cce ? Eigen::MatrixXd{} : distribution, C};

    struct Inputs {
        bool ready = false;
        Sequence train, test;
    };
    Inputs regimes[2], fused;
    for (const auto& m : methods) {
        if (m.early_fusion) {
            if (!fused.ready) fused = {true, early_fusion_inputs(train_p), early_fusion_inputs(test_p)};
            continue;
        }
        auto& slot = regimes[static_cast<int>(m.regime)];
        if (slot.ready) continue;
        const auto bp_seed = derive_seed(plan.seed, {2, static_cast<std::uint64_t>(fold), static_cast<std::uint64_t>(m.regime)});
        auto bp = generate_base_predictions(m.regime, train_p, config.predictors, inner, bp_seed, config.bp);
        u.inner_violations += bp.audit.violations;
        (m.regime == BpRegime::time_dependent ? u.time_dependent_models : u.time_distributed_models) = bp.bank.size();
        for (auto& w : bp.audit.warnings) u.warnings.push_back(where + w);
        slot = {true, std::move(bp.tensor.steps), apply_bank(bp.bank, test_p).steps};
    }

    const auto stacker_seed = derive_seed(plan.seed, {3, static_cast<std::uint64_t>(fold)});
    for (const auto& m : methods) {
        const auto& in = m.early_fusion ? fused : regimes[static_cast<int>(m.regime)];
        auto cfg = stacker_for(config, m, static_cast<int>(in.train.front().cols()), C);
        cfg.seed = stacker_seed;
        auto model = train_stacker(cfg, in.train, targets, loss);
        u.predictions.push_back(argmax_steps(forward(model, in.test)));
    }
    return u;
}

}  // namespace

MetricsReport run_methods(const LongitudinalCohort& cohort, const ExperimentConfig& config,
                          const std::vector<Method>& methods) {
    config.validate();
    if (methods.empty()) throw ValidationError("no configurations to run");
    for (std::size_t i = 0; i < methods.size(); ++i)
        for (std::size_t j = i + 1; j < methods.size(); ++j)
            if (methods[i].name == methods[j].name) throw ValidationError("configuration '" + methods[i].name + "' listed twice");
    if (cohort.times() == 0) throw ValidationError("cohort has no input time points");
    const std::size_t T = cohort.times(), N = cohort.samples();
    const int C = cohort.class_count();
    const auto R = static_cast<std::size_t>(config.repeats), K = static_cast<std::size_t>(config.outer_folds);

    std::vector<FoldPlan> plans;
    for (std::size_t r = 0; r < R; ++r) plans.push_back(make_fold_plan(cohort, config, static_cast<int>(r)));

    std::vector<UnitResult> units(R * K);
    parallel_for(R * K, [&](std::size_t i) {
        units[i] = run_unit(cohort, config, methods, plans[i / K], static_cast<int>(i % K));
    });

    MetricsReport report;
    const auto label_names = cohort.label_time_names();
    report.time_points.assign(label_names.begin() + 1, label_names.end());
    report.class_names = cohort.labels().class_names;
    auto& audit = report.audit;
    audit.units = units.size();
    for (const auto& u : units) {
        audit.inner_violations += u.inner_violations;
        audit.outer_violations += u.outer_violations;
        audit.time_dependent_models = std::max(audit.time_dependent_models, u.time_dependent_models);
        audit.time_distributed_models = std::max(audit.time_distributed_models, u.time_distributed_models);
        audit.unseen_categories += u.unseen;
        audit.warnings.insert(audit.warnings.end(), u.warnings.begin(), u.warnings.end());
    }

    const auto truth = shifted_targets(cohort);
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
        MethodMetrics mm;
        mm.method = methods[mi].name;
        for (std::size_t r = 0; r < R; ++r) {
            Eigen::MatrixXi pred = Eigen::MatrixXi::Constant(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(T), -1);
            std::vector<int> tested(N, 0);
            for (std::size_t k = 0; k < K; ++k) {
                const auto& u = units[r * K + k];
                for (std::size_t i = 0; i < u.test_rows.size(); ++i) {
                    pred.row(static_cast<Eigen::Index>(u.test_rows[i])) = u.predictions[mi].row(static_cast<Eigen::Index>(i));
                    ++tested[u.test_rows[i]];
                }
            }
            if (mi == 0)
                for (int n : tested) audit.outer_violations += n == 1 ? 0 : 1;
            std::vector<double> f_row;
            std::vector<std::vector<double>> class_row;
            std::vector<Eigen::MatrixXi> conf_row;
            for (std::size_t t = 0; t < T; ++t) {
                const auto col = static_cast<Eigen::Index>(t);
                std::vector<int> p(pred.col(col).data(), pred.col(col).data() + N);
                std::vector<int> y(truth.col(col).data(), truth.col(col).data() + N);
                for (auto& v : p) v = std::max(v, 0);
                auto cm = confusion_matrix(p, y, C);
                auto pf = per_class_f(cm);
                double sum = 0.0;
                for (double v : pf) sum += v;
                f_row.push_back(sum / C);
                class_row.push_back(std::move(pf));
                conf_row.push_back(std::move(cm));
            }
            mm.macro_f.push_back(std::move(f_row));
            mm.class_f.push_back(std::move(class_row));
            mm.confusion.push_back(std::move(conf_row));
        }
        for (std::size_t t = 0; t < T; ++t) {
            std::vector<double> col;
            for (const auto& row : mm.macro_f) col.push_back(row[t]);
            mm.median.push_back(median(col));
            mm.standard_error.push_back(standard_error(col));
        }
        report.methods.push_back(std::move(mm));
    }
    return report;
}

MetricsReport run_experiment(const LongitudinalCohort& cohort, const ExperimentConfig& config, int configuration) {
    return run_methods(cohort, config, {lei_configuration(configuration)});
}

MetricsReport run_baseline_early_fusion(const LongitudinalCohort& cohort, const ExperimentConfig& config, HeadKind head) {
    return run_methods(cohort, config, {early_fusion_baseline(head)});
}

MetricsReport compare_configurations(const LongitudinalCohort& cohort, const ExperimentConfig& config,
                                     bool include_baselines) {
    std::vector<Method> methods;
    for (int id = 1; id <= 4; ++id) methods.push_back(lei_configuration(id));
    if (include_baselines) {
        methods.push_back(early_fusion_baseline(HeadKind::time_distributed_mlp));
        methods.push_back(early_fusion_baseline(HeadKind::longitudinal_softmax));
    }
    return run_methods(cohort, config, methods);
}

void write_repeat_table(const MetricsReport& report, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "configuration,repeat,time_point,macro_f";
    for (const auto& c : report.class_names) out << ",f_" << c;
    out << '\n';
    for (const auto& m : report.methods)
        for (std::size_t r = 0; r < m.macro_f.size(); ++r)
            for (std::size_t t = 0; t < report.time_points.size(); ++t) {
                out << m.method << ',' << r << ',' << report.time_points[t] << ',' << text::format_double(m.macro_f[r][t]);
                for (double f : m.class_f[r][t]) out << ',' << text::format_double(f);
                out << '\n';
            }
}

void write_summary_table(const MetricsReport& report, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "configuration,time_point,median,se\n";
    for (const auto& m : report.methods)
        for (std::size_t t = 0; t < report.time_points.size(); ++t)
            out << m.method << ',' << report.time_points[t] << ',' << text::format_double(m.median[t]) << ','
                << text::format_double(m.standard_error[t]) << '\n';
}

void write_summary_json(const MetricsReport& report, const std::filesystem::path& path) {
    using nlohmann::json;
    json j;
    j["time_points"] = report.time_points;
    j["class_names"] = report.class_names;
    j["configurations"] = json::array();
    for (const auto& m : report.methods) {
        json jm;
        jm["name"] = m.method;
        jm["median_macro_f"] = m.median;
        jm["standard_error"] = m.standard_error;
        json per_class = json::array(), confusion = json::array();
        for (std::size_t t = 0; t < report.time_points.size(); ++t) {
            std::vector<double> medians;
            for (std::size_t c = 0; c < report.class_names.size(); ++c) {
                std::vector<double> col;
                for (const auto& r : m.class_f) col.push_back(r[t][c]);
                medians.push_back(median(col));
            }
            per_class.push_back(medians);
            Eigen::MatrixXi total = Eigen::MatrixXi::Zero(m.confusion[0][t].rows(), m.confusion[0][t].cols());
            for (const auto& r : m.confusion) total += r[t];
            json rows = json::array();
            for (Eigen::Index a = 0; a < total.rows(); ++a) {
                std::vector<int> row;
                for (Eigen::Index b = 0; b < total.cols(); ++b) row.push_back(total(a, b));
                rows.push_back(row);
            }
            confusion.push_back(rows);
        }
        jm["median_class_f"] = per_class;
        jm["confusion_summed_over_repeats"] = confusion;
        j["configurations"].push_back(jm);
    }
    const auto& a = report.audit;
    j["audit"] = {{"units", a.units},
                  {"inner_violations", a.inner_violations},
                  {"outer_violations", a.outer_violations},
                  {"time_dependent_models_per_unit", a.time_dependent_models},
                  {"time_distributed_models_per_unit", a.time_distributed_models},
                  {"unseen_categories", a.unseen_categories},
                  {"warnings", a.warnings}};
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

}  // namespace lei
