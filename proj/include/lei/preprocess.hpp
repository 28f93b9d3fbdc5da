#pragma once

#include "lei/cohort.hpp"

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace lei {

struct PreprocessPlan {
    double missing_threshold = 0.30;
    int impute_k = 5;
    std::vector<OneHotDesignation> one_hot;
    bool standardize = true;

    void validate() const;
};

struct DroppedFeature {
    std::string modality;
    std::string feature;
    double worst_missing_fraction = 0.0;
    std::string worst_time_point;
};

/// Drops a feature everywhere when its missing fraction reaches `threshold` at
/// any time point. Modalities left without features are removed.
std::pair<LongitudinalCohort, std::vector<DroppedFeature>> filter_missing_features(const LongitudinalCohort& cohort,
                                                                                   double threshold);

/// Fills every missing cell of `query` with the mean of that feature over the
/// k nearest `reference` rows observing it. Distances are Euclidean over
/// features observed in both rows, rescaled by sqrt(total / shared). Ties go
/// to the lower reference row. Observed cells pass through unchanged.
Eigen::MatrixXd knn_impute(const MaskedMatrix& query, const MaskedMatrix& reference, int k);

/// Imputes one (modality, time) cross-section against itself or a reference.
Eigen::MatrixXd knn_impute(const ModalityBlock& block, std::size_t time, int k, const MaskedMatrix* reference = nullptr);

/// Category sets learned from observed training values.
class OneHotEncoder {
public:
    static OneHotEncoder fit(const LongitudinalCohort& train, const std::vector<OneHotDesignation>& designations);
    /// Unseen categories encode as all-zero indicators and bump the warning count.
    LongitudinalCohort transform(const LongitudinalCohort& cohort, std::size_t* unseen = nullptr) const;
    [[nodiscard]] const std::vector<std::pair<OneHotDesignation, std::vector<double>>>& categories() const {
        return categories_;
    }

private:
    std::vector<std::pair<OneHotDesignation, std::vector<double>>> categories_;
};

/// Fits on the cohort and transforms it.
LongitudinalCohort encode_one_hot(const LongitudinalCohort& cohort, const std::vector<OneHotDesignation>& designations);

struct Standardizer {
    Eigen::RowVectorXd mean;
    Eigen::RowVectorXd scale;  ///< 1 for zero-variance columns (which are also not centered)

    static Standardizer fit(const Eigen::MatrixXd& train);
    [[nodiscard]] Eigen::MatrixXd transform(const Eigen::MatrixXd& x) const;
};

/// Z-scores both matrices with statistics from `train` only.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> standardize_fit_transform(const Eigen::MatrixXd& train,
                                                                      const Eigen::MatrixXd& test);

/// encode one-hot -> filter -> KNN impute -> standardize, all fitted on a
/// training split and applied to any cohort with the same raw schema.
class FittedPreprocessor {
public:
    static FittedPreprocessor fit(const PreprocessPlan& plan, const LongitudinalCohort& train);

    /// Returns a cohort with every cell observed. `unseen` receives the number
    /// of categorical cells whose value never occurred in training.
    [[nodiscard]] LongitudinalCohort transform(const LongitudinalCohort& cohort, std::size_t* unseen = nullptr) const;

    /// The training split as transformed during fitting.
    [[nodiscard]] const LongitudinalCohort& transformed_training() const { return train_transformed_; }
    [[nodiscard]] const std::vector<DroppedFeature>& dropped() const { return dropped_; }
    [[nodiscard]] const PreprocessPlan& plan() const { return plan_; }

private:
    [[nodiscard]] LongitudinalCohort select_kept(const LongitudinalCohort& encoded) const;

    PreprocessPlan plan_;
    OneHotEncoder encoder_;
    std::vector<DroppedFeature> dropped_;
    // Kept (modality name, feature names) after filtering.
    std::vector<std::pair<std::string, std::vector<std::string>>> kept_;
    // Training cross-sections per (modality, time), used as imputation donors.
    std::vector<std::vector<MaskedMatrix>> reference_;
    std::vector<Standardizer> scalers_;
    LongitudinalCohort train_transformed_;
};

void write_dropped_features(const std::vector<DroppedFeature>& dropped, const std::filesystem::path& path);

}  // namespace lei
