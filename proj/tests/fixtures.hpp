#pragma once

#include "lei/cohort.hpp"
#include "lei/random.hpp"
#include "lei/synth.hpp"

#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace lei::testing {

/// Labels are given per sample over T + 1 label times; features are
/// standard normal draws.
inline LongitudinalCohort small_cohort(const std::vector<std::vector<int>>& label_paths,
                                       const std::vector<std::size_t>& feature_counts, std::uint64_t seed = 1,
                                       bool monotone = true) {
    const std::size_t n = label_paths.size();
    const std::size_t times = label_paths.empty() ? 1 : label_paths[0].size() - 1;
    std::vector<std::string> ids;
    for (std::size_t s = 0; s < n; ++s) ids.push_back("s" + std::to_string(s));
    std::vector<std::string> tps;
    for (std::size_t t = 0; t < times; ++t) tps.push_back("t" + std::to_string(t));
    Rng rng(seed);
    std::normal_distribution<double> z;
    std::vector<ModalityBlock> blocks;
    for (std::size_t m = 0; m < feature_counts.size(); ++m) {
        std::vector<std::string> names;
        for (std::size_t f = 0; f < feature_counts[m]; ++f)
            names.push_back("m" + std::to_string(m) + "_f" + std::to_string(f));
        ModalityBlock b("mod" + std::to_string(m), names, n, times);
        for (std::size_t s = 0; s < n; ++s)
            for (std::size_t t = 0; t < times; ++t)
                for (std::size_t f = 0; f < feature_counts[m]; ++f) b.set(s, t, f, z(rng));
        blocks.push_back(std::move(b));
    }
    LabelSequence labels;
    labels.class_count = 3;
    labels.class_names = {"CN", "MCI", "Dementia"};
    labels.labels.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(times + 1));
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t t = 0; t <= times; ++t)
            labels.labels(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(t)) = label_paths[s][t];
    return {ids, tps, "target", std::move(blocks), std::move(labels), monotone};
}

/// Small generated cohort with one informative and one noise modality.
inline GeneratorConfig small_generator(std::size_t n = 60, std::uint64_t seed = 5) {
    GeneratorConfig g;
    g.n_samples = n;
    g.time_point_count = 3;
    g.modality_specs = {{"signal", 3, 1.0, 0.3}, {"noise", 3, 0.0, 1.0}};
    g.target_proportions = {{0.5, 0.5, 0.0}, {0.4, 0.45, 0.15}, {0.35, 0.4, 0.25}};
    g.progression_drift = 0.3;
    g.rate_persistence = 0.8;
    g.seed = seed;
    return g;
}

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() /
               ("lei_test_" + tag + "_" + std::to_string(std::random_device{}()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
};

}  // namespace lei::testing
