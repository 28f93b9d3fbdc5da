#pragma once

#include "lei/base_predictors.hpp"
#include "lei/cohort.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace lei {

/// How base predictors are arranged over time.
enum class BpRegime {
    /// One model per (time, modality, algorithm), trained on that cross-section.
    time_dependent,
    /// One model per (modality, algorithm), trained on all time points stacked,
    /// with the time index appended as a feature.
    time_distributed,
};

std::string to_string(BpRegime r);

struct BpColumn {
    std::string modality;
    std::string algorithm;
    int class_index = 0;

    /// `modality|algorithm|class`
    [[nodiscard]] std::string name() const;
    bool operator==(const BpColumn&) const = default;
};

/// Class-probability features for the stacker, one samples x columns matrix
/// per input time point. Columns run modality-major, then algorithm, then class.
struct BasePredictionTensor {
    std::vector<Eigen::MatrixXd> steps;
    std::vector<BpColumn> columns;
    std::vector<std::string> sample_ids;
    std::vector<std::string> time_point_names;

    [[nodiscard]] std::size_t samples() const { return sample_ids.size(); }
    [[nodiscard]] std::size_t times() const { return steps.size(); }
    [[nodiscard]] std::size_t width() const { return columns.size(); }
};

struct FittedBpBank {
    BpRegime regime = BpRegime::time_dependent;
    std::vector<std::string> modality_names;
    std::vector<std::size_t> feature_counts;
    std::vector<std::string> algorithm_names;
    std::size_t times = 0;
    int class_count = 0;
    /// Affine map applied to the raw time index (time-distributed only).
    double time_index_mean = 0.0;
    double time_index_scale = 1.0;
    /// time_dependent: index (t * M + m) * A + a; time_distributed: m * A + a.
    std::vector<FittedPredictor> models;

    [[nodiscard]] std::size_t size() const { return models.size(); }
    [[nodiscard]] const FittedPredictor& model(std::size_t t, std::size_t m, std::size_t a) const;
};

struct BpOptions {
    int inner_folds = 5;
    /// Z-score the appended time index with training statistics.
    bool standardize_time_index = true;
};

/// Instrumentation filled during generation.
struct BpAudit {
    std::size_t fits = 0;
    /// Tensor cells predicted by a model that saw the sample, plus cells not
    /// predicted exactly once.
    std::size_t violations = 0;
    std::vector<std::string> warnings;
};

struct BpResult {
    BasePredictionTensor tensor;  ///< out-of-fold predictions for stacker training
    FittedBpBank bank;            ///< full-training refits for new data
    BpAudit audit;
};

/// Inner folds are stratified by the label at the last input time point.
std::vector<int> inner_fold_assignment(const LongitudinalCohort& train, int folds, std::uint64_t seed);

/// Base predictors are trained against same-time labels. `cohort` must be fully
/// observed (preprocessed).
BpResult generate_time_dependent(const LongitudinalCohort& train, const std::vector<PredictorSpec>& specs,
                                 std::span<const int> fold_assignment, std::uint64_t seed, const BpOptions& options = {});
BpResult generate_time_dependent(const LongitudinalCohort& train, const std::vector<PredictorSpec>& specs,
                                 int inner_folds, std::uint64_t seed);

BpResult generate_time_distributed(const LongitudinalCohort& train, const std::vector<PredictorSpec>& specs,
                                   std::span<const int> fold_assignment, std::uint64_t seed,
                                   const BpOptions& options = {});
BpResult generate_time_distributed(const LongitudinalCohort& train, const std::vector<PredictorSpec>& specs,
                                   int inner_folds, std::uint64_t seed);

BpResult generate_base_predictions(BpRegime regime, const LongitudinalCohort& train,
                                   const std::vector<PredictorSpec>& specs, std::span<const int> fold_assignment,
                                   std::uint64_t seed, const BpOptions& options = {});

/// Builds a tensor for new data from the bank's full-training models.
BasePredictionTensor apply_bank(const FittedBpBank& bank, const LongitudinalCohort& cohort);

struct TimeBlock {
    std::size_t time_index = 0;
    Eigen::MatrixXd features;  ///< samples x features at that time point
};

/// Stacks per-time blocks into one (T * N) x (F + 1) matrix in ascending
/// time order, rows (t, s) at t * N + s, with the mapped time index appended.
Eigen::MatrixXd flatten_time_blocks(std::vector<TimeBlock> blocks, double index_mean = 0.0, double index_scale = 1.0);

/// Header line of column names, then one row per (sample, time).
void export_tensor(const BasePredictionTensor& tensor, const std::filesystem::path& path);

}  // namespace lei
