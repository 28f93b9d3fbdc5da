#pragma once

#include "lei/cohort.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace lei {

/// How informative features encode the latent progression score.
enum class SignalKind {
    /// x = offset + slope * score + noise
    affine,
    /// Features come in (gate, carrier) pairs: the carrier's sign is flipped by
    /// the gate's sign, so neither column alone is informative.
    interaction,
};

struct ModalitySpec {
    std::string name;
    std::size_t feature_count = 1;
    double signal_fraction = 0.0;  ///< share of features carrying signal, in [0, 1]
    double noise_scale = 1.0;      ///< sd of additive measurement noise, > 0
};

/// Replaces an uninformative feature with integer category codes 0..levels-1.
struct CategoricalSpec {
    std::string modality;
    std::size_t feature_index = 0;
    int levels = 3;
    std::string name;  ///< feature name; generated when empty
};

struct GeneratorConfig {
    std::size_t n_samples = 749;
    std::size_t time_point_count = 5;  ///< label time points: inputs plus one target
    std::vector<ModalitySpec> modality_specs;
    int class_count = 3;
    std::vector<std::string> class_names{"CN", "MCI", "Dementia"};
    std::vector<std::string> time_point_names;  ///< optional; generated when empty
    /// (label time, class) proportions; each row sums to 1.
    std::vector<std::vector<double>> target_proportions;
    double progression_drift = 0.5;
    /// Share of each latent increment explained by a per-sample progression
    /// rate that persists over time (0 = independent increments). A persistent
    /// rate makes the future predictable from the trajectory so far.
    double rate_persistence = 0.0;
    SignalKind signal_kind = SignalKind::affine;
    double missing_rate = 0.0;
    std::vector<CategoricalSpec> categorical;
    std::uint64_t seed = 0;

    /// Throws ValidationError naming the offending field.
    void validate() const;
};

/// Preset with the eight-modality feature layout (9, 7, 8, 40, 69, 68, 68, 68),
/// 749 samples, four input visits plus one target, and rising Dementia share.
GeneratorConfig default_generator_config();

/// Per-visit class proportions of the default preset.
std::vector<std::vector<double>> default_target_proportions();

/// Indices of the informative features of a modality spec (the leading ones).
std::size_t informative_feature_count(const ModalitySpec& spec);

struct GeneratedCohort {
    LongitudinalCohort cohort;
    /// (sample, label time) latent scores driving the labels.
    Eigen::MatrixXd latent;
    /// One-hot designations for the generated categorical features.
    std::vector<OneHotDesignation> one_hot;
};

GeneratedCohort generate_with_latent(const GeneratorConfig& config);
LongitudinalCohort generate(const GeneratorConfig& config);

}  // namespace lei
