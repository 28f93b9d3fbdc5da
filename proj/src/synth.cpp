#include "lei/synth.hpp"

#include "lei/errors.hpp"
#include "lei/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

namespace lei {

namespace {

std::string field(const std::string& name, std::size_t i) { return name + "[" + std::to_string(i) + "]"; }

std::vector<std::string> default_time_names(std::size_t count) {
    if (count == 5) return {"bl", "m06", "m12", "m24", "m36"};
    std::vector<std::string> names;
    for (std::size_t t = 0; t < count; ++t) names.push_back("t" + std::to_string(t));
    return names;
}

std::string feature_name(const std::string& modality, std::size_t f) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%03zu", f);
    return modality + "_" + buf;
}

/// Number of samples with label >= c at each (time, c), from proportions.
std::vector<std::vector<std::size_t>> at_least_counts(const GeneratorConfig& cfg) {
    const auto C = static_cast<std::size_t>(cfg.class_count);
    std::vector<std::vector<std::size_t>> out(cfg.time_point_count, std::vector<std::size_t>(C + 1, 0));
    for (std::size_t t = 0; t < cfg.time_point_count; ++t) {
        double tail = 0.0;
        for (std::size_t c = C; c-- > 0;) {
            tail += cfg.target_proportions[t][c];
            out[t][c] = static_cast<std::size_t>(std::llround(std::min(1.0, tail) * static_cast<double>(cfg.n_samples)));
        }
        out[t][0] = cfg.n_samples;
    }
    return out;
}

}  // namespace

void GeneratorConfig::validate() const {
    if (n_samples == 0) throw ValidationError("n_samples: must be positive");
    if (time_point_count < 2) throw ValidationError("time_point_count: need at least one input and one target time point");
    if (class_count < 2) throw ValidationError("class_count: need at least two classes");
    if (class_names.size() != static_cast<std::size_t>(class_count))
        throw ValidationError("class_names: expected " + std::to_string(class_count) + " names");
    if (!time_point_names.empty() && time_point_names.size() != time_point_count)
        throw ValidationError("time_point_names: expected " + std::to_string(time_point_count) + " names");
    if (modality_specs.empty()) throw ValidationError("modality_specs: at least one modality required");
    std::set<std::string> names;
    for (std::size_t m = 0; m < modality_specs.size(); ++m) {
        const auto& spec = modality_specs[m];
        if (spec.name.empty() || !names.insert(spec.name).second)
            throw ValidationError(field("modality_specs", m) + ".name: must be non-empty and unique");
        if (spec.feature_count == 0) throw ValidationError(field("modality_specs", m) + ".feature_count: must be positive");
        if (!(spec.signal_fraction >= 0.0 && spec.signal_fraction <= 1.0))
            throw ValidationError(field("modality_specs", m) + ".signal_fraction: must lie in [0, 1]");
        if (!(spec.noise_scale > 0.0) || !std::isfinite(spec.noise_scale))
            throw ValidationError(field("modality_specs", m) + ".noise_scale: must be positive");
    }
    if (target_proportions.size() != time_point_count)
        throw ValidationError("target_proportions: expected one row per label time point");
    for (std::size_t t = 0; t < time_point_count; ++t) {
        const auto& row = target_proportions[t];
        if (row.size() != static_cast<std::size_t>(class_count))
            throw ValidationError(field("target_proportions", t) + ": expected " + std::to_string(class_count) + " entries");
        double sum = 0.0;
        for (double p : row) {
            if (!(p >= 0.0)) throw ValidationError(field("target_proportions", t) + ": negative proportion");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-9) throw ValidationError(field("target_proportions", t) + ": row does not sum to 1");
    }
    if (target_proportions[0].back() > 0.0)
        throw ValidationError("target_proportions[0]: the most advanced class cannot occur at the first time point");
    // Monotone labels need P(label >= c) non-decreasing over time for every c.
    for (std::size_t t = 1; t < time_point_count; ++t) {
        double prev = 0.0, cur = 0.0;
        for (auto c = static_cast<std::size_t>(class_count); c-- > 1;) {
            prev += target_proportions[t - 1][c];
            cur += target_proportions[t][c];
            if (cur < prev - 1e-9)
                throw ValidationError(field("target_proportions", t) +
                                      ": infeasible with monotone labels (share at or above class " + std::to_string(c) +
                                      " decreases)");
        }
    }
    if (!(progression_drift >= 0.0) || !std::isfinite(progression_drift))
        throw ValidationError("progression_drift: must be non-negative");
    if (!(rate_persistence >= 0.0 && rate_persistence <= 1.0))
        throw ValidationError("rate_persistence: must lie in [0, 1]");
    if (!(missing_rate >= 0.0 && missing_rate < 1.0)) throw ValidationError("missing_rate: must lie in [0, 1)");
    for (std::size_t i = 0; i < categorical.size(); ++i) {
        const auto& cat = categorical[i];
        auto it = std::find_if(modality_specs.begin(), modality_specs.end(),
                               [&](const ModalitySpec& s) { return s.name == cat.modality; });
        if (it == modality_specs.end()) throw ValidationError(field("categorical", i) + ".modality: unknown modality");
        if (cat.feature_index >= it->feature_count || cat.feature_index < informative_feature_count(*it))
            throw ValidationError(field("categorical", i) + ".feature_index: must name an uninformative feature");
        if (cat.levels < 2) throw ValidationError(field("categorical", i) + ".levels: need at least two levels");
    }
}

std::vector<std::vector<double>> default_target_proportions() {
    // Baseline holds only CN and MCI; Dementia share rises at every later visit.
    return {
        {0.45, 0.55, 0.00},
        {0.43, 0.51, 0.06},
        {0.41, 0.47, 0.12},
        {0.38, 0.43, 0.19},
        {0.36, 0.38, 0.26},
    };
}

GeneratorConfig default_generator_config() {
    GeneratorConfig cfg;
    cfg.n_samples = 749;
    cfg.time_point_count = 5;
    cfg.modality_specs = {
        {"cognitive_tests", 9, 0.5, 0.4},   {"mri_volumes", 7, 0.4, 0.5},
        {"demographics", 8, 0.0, 1.0},      {"roi_volume", 40, 0.1, 0.5},
        {"roi_cortical_volume", 69, 0.05, 0.6}, {"roi_surface_area", 68, 0.0, 1.0},
        {"roi_thickness_avg", 68, 0.05, 0.6}, {"roi_thickness_std", 68, 0.0, 1.0},
    };
    cfg.target_proportions = default_target_proportions();
    cfg.progression_drift = 0.15;
    cfg.rate_persistence = 0.8;
    cfg.missing_rate = 0.05;
    cfg.categorical = {{"demographics", 1, 3, "APOE4"}};
    cfg.seed = 749;
    return cfg;
}

std::size_t informative_feature_count(const ModalitySpec& spec) {
    return static_cast<std::size_t>(std::floor(spec.signal_fraction * static_cast<double>(spec.feature_count) + 0.5));
}

GeneratedCohort generate_with_latent(const GeneratorConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const std::size_t N = cfg.n_samples;
    const std::size_t L = cfg.time_point_count;  // label time points
    const std::size_t T = L - 1;                 // input time points
    const auto C = static_cast<std::size_t>(cfg.class_count);

    // Per-feature affine maps, drawn once.
    struct FeatureMap {
        double offset = 0.0;
        double slope = 0.0;
    };
    std::vector<std::vector<FeatureMap>> maps(cfg.modality_specs.size());
    for (std::size_t m = 0; m < cfg.modality_specs.size(); ++m) {
        const auto& spec = cfg.modality_specs[m];
        maps[m].resize(spec.feature_count);
        for (auto& fm : maps[m]) {
            fm.offset = normal(rng);
            double magnitude = 0.5 + unit(rng);
            fm.slope = unit(rng) < 0.5 ? -magnitude : magnitude;
        }
    }

    // Latent progression: non-decreasing scores per sample.
    Eigen::MatrixXd z(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(L));
    for (std::size_t s = 0; s < N; ++s) {
        z(s, 0) = unit(rng);
        double rate = std::abs(normal(rng));
        for (std::size_t t = 1; t < L; ++t) {
            double step = std::abs(normal(rng));
            z(s, t) = z(s, t - 1) + cfg.progression_drift * (cfg.rate_persistence * rate + (1.0 - cfg.rate_persistence) * step);
        }
    }

    // Labels: nested "label >= c" sets, grown over time by latent rank so that
    // class counts follow the target proportions and no label ever decreases.
    const auto need = at_least_counts(cfg);
    Eigen::MatrixXi labels = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(L));
    std::vector<std::size_t> order(N);
    for (std::size_t t = 0; t < L; ++t) {
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return z(a, t) > z(b, t); });
        std::vector<int> next(N, 0);
        for (std::size_t c = C; c-- > 1;) {
            std::size_t members = 0;
            for (std::size_t s = 0; s < N; ++s) {
                bool forced = next[s] > static_cast<int>(c) || (t > 0 && labels(s, t - 1) >= static_cast<int>(c));
                if (forced) {
                    next[s] = std::max(next[s], static_cast<int>(c));
                    ++members;
                }
            }
            for (std::size_t s : order) {
                if (members >= need[t][c]) break;
                if (next[s] < static_cast<int>(c)) {
                    next[s] = static_cast<int>(c);
                    ++members;
                }
            }
        }
        for (std::size_t s = 0; s < N; ++s) labels(s, t) = next[s];
    }

    // Per-time centering for interaction carriers.
    Eigen::VectorXd center = z.colwise().mean().transpose();

    std::vector<ModalityBlock> blocks;
    std::vector<OneHotDesignation> one_hot;
    for (std::size_t m = 0; m < cfg.modality_specs.size(); ++m) {
        const auto& spec = cfg.modality_specs[m];
        const std::size_t informative = informative_feature_count(spec);
        std::vector<std::string> names;
        for (std::size_t f = 0; f < spec.feature_count; ++f) names.push_back(feature_name(spec.name, f));
        std::vector<int> levels(spec.feature_count, 0);
        for (const auto& cat : cfg.categorical) {
            if (cat.modality != spec.name) continue;
            levels[cat.feature_index] = cat.levels;
            if (!cat.name.empty()) names[cat.feature_index] = cat.name;
            one_hot.push_back({spec.name, names[cat.feature_index]});
        }
        ModalityBlock block(spec.name, names, N, T);
        for (std::size_t s = 0; s < N; ++s) {
            // Categorical codes are a fixed per-sample trait.
            std::vector<double> trait(spec.feature_count, 0.0);
            for (std::size_t f = 0; f < spec.feature_count; ++f)
                if (levels[f] > 0)
                    trait[f] = std::floor(unit(rng) * levels[f]);
            for (std::size_t t = 0; t < T; ++t) {
                double gate = 0.0;
                for (std::size_t f = 0; f < spec.feature_count; ++f) {
                    const auto& fm = maps[m][f];
                    double v;
                    if (levels[f] > 0) {
                        v = trait[f];
                    } else if (f >= informative) {
                        v = fm.offset + spec.noise_scale * normal(rng);
                    } else if (cfg.signal_kind == SignalKind::affine) {
                        v = fm.offset + fm.slope * z(s, t) + spec.noise_scale * normal(rng);
                    } else if (f % 2 == 0 && f + 1 < informative) {
                        gate = normal(rng);
                        v = gate;
                    } else {
                        double sign = gate >= 0.0 ? 1.0 : -1.0;
                        v = sign * fm.slope * (z(s, t) - center(t)) + spec.noise_scale * normal(rng);
                    }
                    if (cfg.missing_rate > 0.0 && unit(rng) < cfg.missing_rate)
                        block.set_missing(s, t, f);
                    else
                        block.set(s, t, f, v);
                }
            }
        }
        blocks.push_back(std::move(block));
    }

    std::vector<std::string> ids;
    const int width = static_cast<int>(std::to_string(N).size());
    for (std::size_t s = 0; s < N; ++s) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "S%0*zu", width, s + 1);
        ids.emplace_back(buf);
    }
    auto times = cfg.time_point_names.empty() ? default_time_names(L) : cfg.time_point_names;
    std::string target = times.back();
    times.pop_back();

    LabelSequence seq{labels, cfg.class_count, cfg.class_names};
    return {LongitudinalCohort(std::move(ids), std::move(times), std::move(target), std::move(blocks), std::move(seq), true),
            std::move(z), std::move(one_hot)};
}

LongitudinalCohort generate(const GeneratorConfig& config) { return generate_with_latent(config).cohort; }

}  // namespace lei
