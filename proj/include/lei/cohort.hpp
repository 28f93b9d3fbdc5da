#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace lei {

/// Dense matrix with a per-cell observed flag. Missing cells hold 0 in
/// `values`; only `observed` decides whether a cell carries data.
struct MaskedMatrix {
    Eigen::MatrixXd values;
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> observed;

    MaskedMatrix() = default;
    MaskedMatrix(Eigen::Index rows, Eigen::Index cols);
    explicit MaskedMatrix(Eigen::MatrixXd fully_observed);

    [[nodiscard]] Eigen::Index rows() const { return values.rows(); }
    [[nodiscard]] Eigen::Index cols() const { return values.cols(); }
    [[nodiscard]] bool complete() const { return observed.all(); }
};

/// One modality's features over (sample, time, feature).
class ModalityBlock {
public:
    ModalityBlock() = default;
    ModalityBlock(std::string name, std::vector<std::string> feature_names, std::size_t samples,
                  std::size_t times);

    [[nodiscard]] const std::string& name() const { return name_; }
    [[nodiscard]] const std::vector<std::string>& feature_names() const { return feature_names_; }
    [[nodiscard]] std::size_t samples() const { return samples_; }
    [[nodiscard]] std::size_t times() const { return times_; }
    [[nodiscard]] std::size_t features() const { return feature_names_.size(); }

    [[nodiscard]] bool observed(std::size_t s, std::size_t t, std::size_t f) const {
        return observed_[index(s, t, f)] != 0;
    }
    /// Value of an observed cell; 0 for missing cells.
    [[nodiscard]] double value(std::size_t s, std::size_t t, std::size_t f) const {
        return values_[index(s, t, f)];
    }
    void set(std::size_t s, std::size_t t, std::size_t f, double v) {
        values_[index(s, t, f)] = v;
        observed_[index(s, t, f)] = 1;
    }
    void set_missing(std::size_t s, std::size_t t, std::size_t f) {
        values_[index(s, t, f)] = 0.0;
        observed_[index(s, t, f)] = 0;
    }

    /// Samples x features cross-section at one time point.
    [[nodiscard]] MaskedMatrix slice(std::size_t t) const;
    void assign_slice(std::size_t t, const MaskedMatrix& m);

    [[nodiscard]] std::size_t missing_count() const;

    bool operator==(const ModalityBlock& other) const = default;

private:
    [[nodiscard]] std::size_t index(std::size_t s, std::size_t t, std::size_t f) const {
        return (s * times_ + t) * feature_names_.size() + f;
    }

    std::string name_;
    std::vector<std::string> feature_names_;
    std::size_t samples_ = 0;
    std::size_t times_ = 0;
    std::vector<double> values_;
    std::vector<std::uint8_t> observed_;
};

/// Ordinal labels over (sample, label time). Label times are the input
/// time points followed by one target-only time point.
struct LabelSequence {
    Eigen::MatrixXi labels;
    int class_count = 0;
    std::vector<std::string> class_names;

    bool operator==(const LabelSequence& other) const {
        return class_count == other.class_count && class_names == other.class_names &&
               labels.rows() == other.labels.rows() && labels.cols() == other.labels.cols() &&
               labels == other.labels;
    }
};

class LongitudinalCohort {
public:
    LongitudinalCohort() = default;

    /// Validates every structural invariant; throws ValidationError.
    LongitudinalCohort(std::vector<std::string> sample_ids, std::vector<std::string> time_point_names,
                       std::string target_time_point, std::vector<ModalityBlock> modalities,
                       LabelSequence labels, bool monotone_progression);

    [[nodiscard]] const std::vector<std::string>& sample_ids() const { return sample_ids_; }
    [[nodiscard]] const std::vector<std::string>& time_point_names() const { return time_point_names_; }
    [[nodiscard]] const std::string& target_time_point() const { return target_time_point_; }
    /// Input time points plus the target time point.
    [[nodiscard]] std::vector<std::string> label_time_names() const;
    [[nodiscard]] const std::vector<ModalityBlock>& modalities() const { return modalities_; }
    [[nodiscard]] const LabelSequence& labels() const { return labels_; }
    [[nodiscard]] bool monotone_progression() const { return monotone_; }

    [[nodiscard]] std::size_t samples() const { return sample_ids_.size(); }
    [[nodiscard]] std::size_t times() const { return time_point_names_.size(); }
    [[nodiscard]] int class_count() const { return labels_.class_count; }
    [[nodiscard]] std::size_t total_features() const;

    /// Labels at label-time index t (0..times()).
    [[nodiscard]] std::vector<int> labels_at(std::size_t t) const;

    /// Index of a modality by name, or -1.
    [[nodiscard]] int modality_index(const std::string& name) const;

    bool operator==(const LongitudinalCohort& other) const = default;

private:
    std::vector<std::string> sample_ids_;
    std::vector<std::string> time_point_names_;
    std::string target_time_point_;
    std::vector<ModalityBlock> modalities_;
    LabelSequence labels_;
    bool monotone_ = false;
};

struct OneHotDesignation {
    std::string modality;
    std::string feature;
    bool operator==(const OneHotDesignation&) const = default;
};

/// Declares how the columns of a long-format file map onto modalities.
struct CohortSchema {
    struct Modality {
        std::string name;
        std::vector<std::string> features;
    };
    std::vector<std::string> class_names;
    std::vector<std::string> time_points;
    std::string target_time_point;
    std::vector<Modality> modalities;
    std::vector<OneHotDesignation> one_hot;
    bool monotone_progression = true;
};

CohortSchema load_schema(const std::filesystem::path& path);
void save_schema(const CohortSchema& schema, const std::filesystem::path& path);
CohortSchema schema_of(const LongitudinalCohort& cohort, std::vector<OneHotDesignation> one_hot = {});

/// Reads `sample_id,time_point,<features...>,label` rows. Absent rows and empty
/// fields become missing cells. A sample whose label is absent at some time
/// takes the nearest earlier label (or the nearest later one at the start).
LongitudinalCohort load_cohort(const std::filesystem::path& path, const CohortSchema& schema);

/// Writes every (sample, label time) row, target-time rows with empty features.
void export_cohort(const LongitudinalCohort& cohort, const std::filesystem::path& path);

/// Counts per (label time, class); row sums equal the sample count.
Eigen::MatrixXi class_distribution(const LongitudinalCohort& cohort);

LongitudinalCohort subset_by_samples(const LongitudinalCohort& cohort, const std::vector<std::string>& ids);
LongitudinalCohort subset_by_indices(const LongitudinalCohort& cohort, const std::vector<std::size_t>& rows);

}  // namespace lei
