#pragma once

#include "lei/base_predictors.hpp"
#include "lei/cohort.hpp"
#include "lei/preprocess.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace lei {

struct InterpretConfig {
    PreprocessPlan preprocess;
    std::vector<PredictorSpec> predictors;
    /// Static combiner over base-prediction columns.
    LogisticParams combiner{0.5, 300, 1e-4};
    int inner_folds = 5;
    int permutation_repeats = 10;
    int top_k = 10;
    std::uint64_t seed = 0;

    void validate() const;
};

InterpretConfig default_interpret_config();

struct RankedFeature {
    std::string modality;
    std::string feature;
    int rank = 0;  ///< 1-based
    /// 1 / rank_product; non-increasing down a ranking.
    double score = 0.0;
    double rank_product = 0.0;
    int modality_rank = 0;
    double feature_mean_rank = 0.0;
    /// Held-out macro-F drop when the feature is permuted, averaged over
    /// algorithms, with its spread across permutation repeats.
    double importance = 0.0;
    double importance_sd = 0.0;
};

struct ModalityImportance {
    std::string modality;
    int rank = 0;
    double importance = 0.0;  ///< summed combiner-level drop over the modality's columns
};

struct TimeRanking {
    std::size_t time_index = 0;
    std::string time_point;         ///< input time whose features are ranked
    std::string target_time_point;  ///< label time the models were trained on
    double baseline_macro_f = 0.0;  ///< held-out combiner score before permutation
    std::vector<ModalityImportance> modalities;
    std::vector<RankedFeature> features;  ///< every kept feature, best first
};

struct TrajectoryLink {
    std::string modality;
    std::string feature;
    std::string from;
    std::string to;
    bool operator==(const TrajectoryLink&) const = default;
};

struct ImportanceTable {
    int top_k = 10;
    std::vector<TimeRanking> times;
    std::vector<TrajectoryLink> links;
};

/// Input times whose next-visit label exists.
std::vector<std::size_t> eligible_times(const LongitudinalCohort& cohort);

/// Ranks features at input time t using labels at t + 1. `cohort` may hold
/// missing cells; it is preprocessed with the config's plan.
TimeRanking rank_features_at_time(const LongitudinalCohort& cohort, std::size_t t, const InterpretConfig& config);

/// Links every feature present in the top k at two consecutive rankings.
ImportanceTable build_trajectories(std::vector<TimeRanking> rankings, int k);

/// Rankings at every eligible time point plus their trajectories.
ImportanceTable interpret_cohort(const LongitudinalCohort& cohort, const InterpretConfig& config);

/// `time_point,rank,modality,feature,score` for the top k of each time point.
void write_importance_table(const ImportanceTable& table, const std::filesystem::path& path);
/// `feature,t_from,t_to`
void write_trajectory_links(const ImportanceTable& table, const std::filesystem::path& path);

}  // namespace lei
