#include "lei/interpret.hpp"

#include "lei/errors.hpp"
#include "lei/folds.hpp"
#include "lei/metrics.hpp"
#include "lei/parallel.hpp"
#include "lei/random.hpp"
#include "lei/text_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

namespace lei {

void InterpretConfig::validate() const {
    preprocess.validate();
    if (predictors.empty()) throw ValidationError("interpret: at least one base predictor required");
    for (const auto& p : predictors) p.validate();
    logistic_spec(combiner).validate();
    if (inner_folds < 2) throw ValidationError("interpret: inner_folds must be at least 2");
    if (permutation_repeats < 1) throw ValidationError("interpret: permutation_repeats must be at least 1");
    if (top_k < 1) throw ValidationError("interpret: top_k must be at least 1");
}

InterpretConfig default_interpret_config() {
    InterpretConfig c;
    c.predictors = {knn_spec(15), logistic_spec(), forest_spec()};
    return c;
}

std::vector<std::size_t> eligible_times(const LongitudinalCohort& cohort) {
    std::vector<std::size_t> out(cohort.times());
    std::iota(out.begin(), out.end(), 0);
    return out;
}

namespace {

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& x, const std::vector<std::size_t>& rows) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
    return out;
}

std::vector<int> take(const std::vector<int>& y, const std::vector<std::size_t>& rows) {
    std::vector<int> out;
    for (auto r : rows) out.push_back(y[r]);
    return out;
}

/// Row order for one permutation of a held-out fold.
std::vector<Eigen::Index> shuffled(std::size_t n, std::uint64_t seed) {
    std::vector<Eigen::Index> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    return order;
}

/// 1-based ranks by descending value, ties to the lower index.
std::vector<int> descending_ranks(const std::vector<double>& v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
    std::vector<int> rank(v.size());
    for (std::size_t i = 0; i < order.size(); ++i) rank[order[i]] = static_cast<int>(i) + 1;
    return rank;
}

}  // namespace

TimeRanking rank_features_at_time(const LongitudinalCohort& cohort, std::size_t t, const InterpretConfig& cfg) {
    cfg.validate();
    if (t >= cohort.times())
        throw ValidationError("interpret: time index " + std::to_string(t) + " has no next-visit label (input times 0-" +
                              std::to_string(cohort.times() - 1) + ")");
    const auto pre = FittedPreprocessor::fit(cfg.preprocess, cohort);
    const auto& data = pre.transformed_training();
    const auto y = data.labels_at(t + 1);
    const int C = data.class_count();
    const std::size_t M = data.modalities().size(), A = cfg.predictors.size();
    const std::size_t K = static_cast<std::size_t>(cfg.inner_folds), R = static_cast<std::size_t>(cfg.permutation_repeats);
    const std::uint64_t seed = derive_seed(cfg.seed, {t});

    const auto folds = stratified_folds(y, cfg.inner_folds, derive_seed(seed, {0}));
    std::vector<std::vector<std::size_t>> test(K), train(K);
    for (std::size_t k = 0; k < K; ++k) {
        test[k] = fold_members(folds, static_cast<int>(k));
        train[k] = fold_complement(folds, static_cast<int>(k));
    }
    std::vector<Eigen::MatrixXd> x(M);
    for (std::size_t m = 0; m < M; ++m) x[m] = data.modalities()[m].slice(t).values;

    // Out-of-fold base predictions, one fitted model per (modality, algorithm, fold).
    const auto N = static_cast<Eigen::Index>(data.samples());
    Eigen::MatrixXd oof(N, static_cast<Eigen::Index>(M * A * C));
    std::vector<FittedPredictor> models(M * A * K);
    parallel_for(M * A * K, [&](std::size_t task) {
        const std::size_t k = task % K, a = (task / K) % A, m = task / K / A;
        auto spec = cfg.predictors[a];
        spec.seed = derive_seed(seed ^ spec.seed, {1, m, a, k});
        models[task] = fit(spec, take_rows(x[m], train[k]), take(y, train[k]), C);
        Eigen::MatrixXd p = models[task].predict_proba(take_rows(x[m], test[k]));
        for (std::size_t i = 0; i < test[k].size(); ++i)
            oof.block(static_cast<Eigen::Index>(test[k][i]), static_cast<Eigen::Index>((m * A + a) * C), 1, C) =
                p.row(static_cast<Eigen::Index>(i));
    });

    auto oof_score = [&](const Eigen::MatrixXd& probs) { return macro_f_measure(argmax_rows(probs), y, C); };

    // Raw-feature permutation inside each modality's base predictors. The same
    // row shuffle serves every algorithm so their drops are paired.
    std::vector<double> base_bp(M * A);
    for (std::size_t j = 0; j < M * A; ++j)
        base_bp[j] = oof_score(oof.middleCols(static_cast<Eigen::Index>(j * C), C));
    std::vector<std::pair<std::size_t, std::size_t>> feature_tasks;
    for (std::size_t m = 0; m < M; ++m)
        for (std::size_t f = 0; f < data.modalities()[m].features(); ++f) feature_tasks.emplace_back(m, f);
    // drops[task][a * R + r]
    std::vector<std::vector<double>> feature_drops(feature_tasks.size());
    parallel_for(feature_tasks.size(), [&](std::size_t task) {
        const auto [m, f] = feature_tasks[task];
        auto& out = feature_drops[task];
        out.assign(A * R, 0.0);
        std::vector<Eigen::MatrixXd> permuted(A, Eigen::MatrixXd(N, C));
        for (std::size_t r = 0; r < R; ++r) {
            for (std::size_t k = 0; k < K; ++k) {
                Eigen::MatrixXd held = take_rows(x[m], test[k]);
                const auto order = shuffled(test[k].size(), derive_seed(seed, {2, m, f, r, k}));
                Eigen::VectorXd column = held.col(static_cast<Eigen::Index>(f));
                for (std::size_t i = 0; i < order.size(); ++i) held(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f)) = column(order[i]);
                for (std::size_t a = 0; a < A; ++a) {
                    Eigen::MatrixXd p = models[(m * A + a) * K + k].predict_proba(held);
                    for (std::size_t i = 0; i < test[k].size(); ++i)
                        permuted[a].row(static_cast<Eigen::Index>(test[k][i])) = p.row(static_cast<Eigen::Index>(i));
                }
            }
            for (std::size_t a = 0; a < A; ++a) out[a * R + r] = base_bp[m * A + a] - oof_score(permuted[a]);
        }
    });

    // Static combiner over the out-of-fold columns, scored on held-out folds.
    const auto combiner = logistic_spec(cfg.combiner);
    std::vector<FittedPredictor> combiners(K);
    Eigen::MatrixXd combined(N, C);
    for (std::size_t k = 0; k < K; ++k) {
        combiners[k] = fit(combiner, take_rows(oof, train[k]), take(y, train[k]), C);
        Eigen::MatrixXd p = combiners[k].predict_proba(take_rows(oof, test[k]));
        for (std::size_t i = 0; i < test[k].size(); ++i) combined.row(static_cast<Eigen::Index>(test[k][i])) = p.row(static_cast<Eigen::Index>(i));
    }
    const double base_combined = oof_score(combined);

    // Each (modality, algorithm) block of C columns is permuted as a unit.
    std::vector<double> block_drop(M * A, 0.0);
    parallel_for(M * A, [&](std::size_t j) {
        double total = 0.0;
        Eigen::MatrixXd permuted(N, C);
        for (std::size_t r = 0; r < R; ++r) {
            for (std::size_t k = 0; k < K; ++k) {
                Eigen::MatrixXd held = take_rows(oof, test[k]);
                const auto order = shuffled(test[k].size(), derive_seed(seed, {3, j, r, k}));
                Eigen::MatrixXd block = held.middleCols(static_cast<Eigen::Index>(j * C), C);
                for (std::size_t i = 0; i < order.size(); ++i)
                    held.block(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j * C), 1, C) = block.row(order[i]);
                Eigen::MatrixXd p = combiners[k].predict_proba(held);
                for (std::size_t i = 0; i < test[k].size(); ++i)
                    permuted.row(static_cast<Eigen::Index>(test[k][i])) = p.row(static_cast<Eigen::Index>(i));
            }
            total += base_combined - oof_score(permuted);
        }
        block_drop[j] = total / static_cast<double>(R);
    });

    TimeRanking out;
    out.time_index = t;
    out.time_point = data.time_point_names()[t];
    out.target_time_point = data.label_time_names()[t + 1];
    out.baseline_macro_f = base_combined;

    std::vector<double> modality_importance(M, 0.0);
    for (std::size_t m = 0; m < M; ++m)
        for (std::size_t a = 0; a < A; ++a) modality_importance[m] += block_drop[m * A + a];
    const auto modality_rank = descending_ranks(modality_importance);
    for (std::size_t m = 0; m < M; ++m)
        out.modalities.push_back({data.modalities()[m].name(), modality_rank[m], modality_importance[m]});

    struct Entry {
        RankedFeature feature;
        std::size_t m = 0, f = 0;
    };
    std::vector<Entry> entries;
    std::size_t task = 0;
    for (std::size_t m = 0; m < M; ++m) {
        const auto F = data.modalities()[m].features();
        std::vector<double> mean_rank(F, 0.0);
        for (std::size_t a = 0; a < A; ++a) {
            std::vector<double> drop(F);
            for (std::size_t f = 0; f < F; ++f) {
                const auto& d = feature_drops[task + f];
                drop[f] = std::accumulate(d.begin() + static_cast<long>(a * R), d.begin() + static_cast<long>((a + 1) * R), 0.0) /
                          static_cast<double>(R);
            }
            const auto rank = descending_ranks(drop);
            for (std::size_t f = 0; f < F; ++f) mean_rank[f] += static_cast<double>(rank[f]) / static_cast<double>(A);
        }
        for (std::size_t f = 0; f < F; ++f, ++task) {
            const auto& d = feature_drops[task];
            std::vector<double> per_repeat(R, 0.0);
            for (std::size_t a = 0; a < A; ++a)
                for (std::size_t r = 0; r < R; ++r) per_repeat[r] += d[a * R + r] / static_cast<double>(A);
            const double mean = std::accumulate(per_repeat.begin(), per_repeat.end(), 0.0) / static_cast<double>(R);
            double ss = 0.0;
            for (double v : per_repeat) ss += (v - mean) * (v - mean);
            Entry e;
            e.m = m;
            e.f = f;
            e.feature.modality = data.modalities()[m].name();
            e.feature.feature = data.modalities()[m].feature_names()[f];
            e.feature.modality_rank = modality_rank[m];
            e.feature.feature_mean_rank = mean_rank[f];
            e.feature.rank_product = modality_rank[m] * mean_rank[f];
            e.feature.score = 1.0 / e.feature.rank_product;
            e.feature.importance = mean;
            e.feature.importance_sd = R > 1 ? std::sqrt(ss / static_cast<double>(R - 1)) : 0.0;
            entries.push_back(std::move(e));
        }
    }
    std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        if (a.feature.rank_product != b.feature.rank_product) return a.feature.rank_product < b.feature.rank_product;
        return a.feature.importance > b.feature.importance;
    });
    for (std::size_t i = 0; i < entries.size(); ++i) {
        entries[i].feature.rank = static_cast<int>(i) + 1;
        out.features.push_back(std::move(entries[i].feature));
    }
    return out;
}

ImportanceTable build_trajectories(std::vector<TimeRanking> rankings, int k) {
    if (k < 1) throw ValidationError("trajectories: k must be at least 1");
    ImportanceTable table;
    table.top_k = k;
    table.times = std::move(rankings);
    auto top = [&](const TimeRanking& r) {
        std::set<std::pair<std::string, std::string>> s;
        for (std::size_t i = 0; i < r.features.size() && i < static_cast<std::size_t>(k); ++i)
            s.emplace(r.features[i].modality, r.features[i].feature);
        return s;
    };
    for (std::size_t i = 0; i + 1 < table.times.size(); ++i) {
        const auto next = top(table.times[i + 1]);
        const auto& cur = table.times[i];
        for (std::size_t j = 0; j < cur.features.size() && j < static_cast<std::size_t>(k); ++j)
            if (next.count({cur.features[j].modality, cur.features[j].feature}))
                table.links.push_back({cur.features[j].modality, cur.features[j].feature, cur.time_point,
                                       table.times[i + 1].time_point});
    }
    return table;
}

ImportanceTable interpret_cohort(const LongitudinalCohort& cohort, const InterpretConfig& config) {
    config.validate();
    const auto times = eligible_times(cohort);
    std::vector<TimeRanking> rankings(times.size());
    parallel_for(times.size(), [&](std::size_t i) { rankings[i] = rank_features_at_time(cohort, times[i], config); });
    return build_trajectories(std::move(rankings), config.top_k);
}

void write_importance_table(const ImportanceTable& table, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "time_point,rank,modality,feature,score\n";
    for (const auto& r : table.times)
        for (std::size_t i = 0; i < r.features.size() && i < static_cast<std::size_t>(table.top_k); ++i) {
            const auto& f = r.features[i];
            out << r.time_point << ',' << f.rank << ',' << f.modality << ',' << f.feature << ','
                << text::format_double(f.score) << '\n';
        }
}

void write_trajectory_links(const ImportanceTable& table, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "feature,t_from,t_to\n";
    for (const auto& l : table.links) out << l.feature << ',' << l.from << ',' << l.to << '\n';
}

}  // namespace lei
