#pragma once

#include "lei/base_predictors.hpp"
#include "lei/bp_tensor.hpp"
#include "lei/cohort.hpp"
#include "lei/losses.hpp"
#include "lei/metrics.hpp"
#include "lei/preprocess.hpp"
#include "lei/stacker.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace lei {

/// A stacking configuration or an early-fusion baseline.
struct Method {
    std::string name;
    bool early_fusion = false;
    BpRegime regime = BpRegime::time_dependent;  ///< ignored for early fusion
    HeadKind head = HeadKind::time_distributed_mlp;

    bool operator==(const Method&) const = default;
};

/// Configurations 1-4: {time-dependent, time-distributed} BPs x {MLP, longitudinal} heads.
Method lei_configuration(int id);
Method early_fusion_baseline(HeadKind head);
/// Accepts `1`..`4`, `config1`..`config4`, `early_fusion_mlp`, `early_fusion_longitudinal`.
Method method_from_string(const std::string& name);

struct ExperimentConfig {
    PreprocessPlan preprocess;
    std::vector<PredictorSpec> predictors;
    /// Architecture and optimizer shared by every method. The longitudinal head
    /// appends a final layer of class_count units to `hidden_sizes`;
    /// input_width, class_count and head are filled in per method.
    StackerConfig stacker;
    LossKind loss = LossKind::dwcce;
    int repeats = 20;
    int outer_folds = 5;
    int inner_folds = 5;
    BpOptions bp;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Three heterogeneous predictors: KNN, multinomial logistic, random forest.
std::vector<PredictorSpec> default_predictors();
ExperimentConfig default_experiment_config();

/// Stacker settings for one method, given the input width.
StackerConfig stacker_for(const ExperimentConfig& config, const Method& method, int input_width, int class_count);

/// Fold assignments for one repeat, keyed by sample position.
struct FoldPlan {
    int repeat = 0;
    std::uint64_t seed = 0;
    std::vector<int> outer;               ///< per sample
    std::vector<std::vector<int>> inner;  ///< per outer fold, per training sample of that fold
};

FoldPlan make_fold_plan(const LongitudinalCohort& cohort, const ExperimentConfig& config, int repeat);

struct MethodMetrics {
    std::string method;
    std::vector<std::vector<double>> macro_f;                  ///< [repeat][time]
    std::vector<std::vector<std::vector<double>>> class_f;     ///< [repeat][time][class]
    std::vector<std::vector<Eigen::MatrixXi>> confusion;       ///< [repeat][time]
    std::vector<double> median;                                ///< per time
    std::vector<double> standard_error;                        ///< per time
};

struct ExperimentAudit {
    std::size_t units = 0;
    /// Base-prediction cells violating out-of-fold coverage.
    std::size_t inner_violations = 0;
    /// Samples not tested exactly once per repeat, or tested by a unit that trained on them.
    std::size_t outer_violations = 0;
    /// Full-training base predictors per unit, by regime (0 when unused).
    std::size_t time_dependent_models = 0;
    std::size_t time_distributed_models = 0;
    std::size_t unseen_categories = 0;
    std::vector<std::string> warnings;
};

struct MetricsReport {
    std::vector<std::string> time_points;  ///< target time names
    std::vector<std::string> class_names;
    std::vector<MethodMetrics> methods;
    ExperimentAudit audit;
};

/// Nested CV over all methods with shared folds, preprocessing and base
/// predictions within each (repeat, outer fold).
MetricsReport run_methods(const LongitudinalCohort& cohort, const ExperimentConfig& config,
                          const std::vector<Method>& methods);

MetricsReport run_experiment(const LongitudinalCohort& cohort, const ExperimentConfig& config, int configuration);
MetricsReport run_baseline_early_fusion(const LongitudinalCohort& cohort, const ExperimentConfig& config,
                                        HeadKind head);
/// Configurations 1-4, optionally followed by both early-fusion baselines.
MetricsReport compare_configurations(const LongitudinalCohort& cohort, const ExperimentConfig& config,
                                     bool include_baselines = true);

/// Steps of concatenated modality features.
Sequence early_fusion_inputs(const LongitudinalCohort& cohort);

/// Labels at times 1..T, samples x T.
Eigen::MatrixXi shifted_targets(const LongitudinalCohort& cohort);

/// `configuration,repeat,time_point,macro_f,f_<class>...`
void write_repeat_table(const MetricsReport& report, const std::filesystem::path& path);
/// `configuration,time_point,median,se`
void write_summary_table(const MetricsReport& report, const std::filesystem::path& path);
/// Medians, standard errors, per-class medians, summed confusion matrices and the audit.
void write_summary_json(const MetricsReport& report, const std::filesystem::path& path);

}  // namespace lei
