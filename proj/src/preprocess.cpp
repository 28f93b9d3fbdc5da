#include "lei/preprocess.hpp"

#include "lei/errors.hpp"
#include "lei/text_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>

namespace lei {

void PreprocessPlan::validate() const {
    if (!(missing_threshold > 0.0 && missing_threshold <= 1.0))
        throw ValidationError("missing_threshold: must lie in (0, 1]");
    if (impute_k < 1) throw ValidationError("impute_k: must be at least 1");
}

// ---------------------------------------------------------------- filtering

namespace {

LongitudinalCohort with_modalities(const LongitudinalCohort& c, std::vector<ModalityBlock> blocks) {
    return {c.sample_ids(), c.time_point_names(), c.target_time_point(), std::move(blocks), c.labels(),
            c.monotone_progression()};
}

ModalityBlock select_features(const ModalityBlock& m, const std::vector<std::size_t>& keep) {
    std::vector<std::string> names;
    for (auto f : keep) names.push_back(m.feature_names()[f]);
    ModalityBlock out(m.name(), std::move(names), m.samples(), m.times());
    for (std::size_t s = 0; s < m.samples(); ++s)
        for (std::size_t t = 0; t < m.times(); ++t)
            for (std::size_t i = 0; i < keep.size(); ++i)
                if (m.observed(s, t, keep[i])) out.set(s, t, i, m.value(s, t, keep[i]));
    return out;
}

}  // namespace

std::pair<LongitudinalCohort, std::vector<DroppedFeature>> filter_missing_features(const LongitudinalCohort& cohort,
                                                                                   double threshold) {
    if (!(threshold > 0.0 && threshold <= 1.0)) throw ValidationError("missing threshold must lie in (0, 1]");
    std::vector<DroppedFeature> dropped;
    std::vector<ModalityBlock> kept_blocks;
    const double n = static_cast<double>(cohort.samples());

    for (const auto& m : cohort.modalities()) {
        std::vector<std::size_t> keep;
        for (std::size_t f = 0; f < m.features(); ++f) {
            double worst = 0.0;
            std::size_t worst_t = 0;
            for (std::size_t t = 0; t < m.times(); ++t) {
                std::size_t missing = 0;
                for (std::size_t s = 0; s < m.samples(); ++s) missing += m.observed(s, t, f) ? 0 : 1;
                double frac = n > 0 ? static_cast<double>(missing) / n : 0.0;
                if (frac > worst) {
                    worst = frac;
                    worst_t = t;
                }
            }
            if (n > 0 && worst >= threshold)
                dropped.push_back({m.name(), m.feature_names()[f], worst, cohort.time_point_names()[worst_t]});
            else
                keep.push_back(f);
        }
        if (!keep.empty()) kept_blocks.push_back(select_features(m, keep));
    }
    if (kept_blocks.empty()) throw ValidationError("missingness filter dropped every feature");
    return {with_modalities(cohort, std::move(kept_blocks)), std::move(dropped)};
}

// ---------------------------------------------------------------- imputation

Eigen::MatrixXd knn_impute(const MaskedMatrix& query, const MaskedMatrix& reference, int k) {
    if (k < 1) throw ValidationError("knn_impute: k must be at least 1");
    if (query.cols() != reference.cols()) throw ValidationError("knn_impute: feature count mismatch");
    const Eigen::Index F = query.cols();
    const Eigen::Index R = reference.rows();
    Eigen::MatrixXd out = query.values;

    std::vector<double> dist(static_cast<std::size_t>(R));
    std::vector<std::pair<double, Eigen::Index>> donors;
    donors.reserve(static_cast<std::size_t>(R));

    for (Eigen::Index i = 0; i < query.rows(); ++i) {
        if (query.observed.row(i).all()) continue;
        for (Eigen::Index j = 0; j < R; ++j) {
            double sum = 0.0;
            Eigen::Index shared = 0;
            for (Eigen::Index f = 0; f < F; ++f) {
                if (query.observed(i, f) && reference.observed(j, f)) {
                    double d = query.values(i, f) - reference.values(j, f);
                    sum += d * d;
                    ++shared;
                }
            }
            dist[j] = shared > 0 ? std::sqrt(sum * static_cast<double>(F) / static_cast<double>(shared))
                                 : std::numeric_limits<double>::infinity();
        }
        for (Eigen::Index f = 0; f < F; ++f) {
            if (query.observed(i, f)) continue;
            donors.clear();
            for (Eigen::Index j = 0; j < R; ++j)
                if (reference.observed(j, f)) donors.emplace_back(dist[j], j);
            if (donors.empty()) throw ValidationError("knn_impute: feature " + std::to_string(f) + " is missing in every reference row");
            if (donors.size() < static_cast<std::size_t>(k))
                throw ValidationError("knn_impute: k=" + std::to_string(k) + " exceeds the " + std::to_string(donors.size()) +
                                      " rows observing feature " + std::to_string(f));
            std::partial_sort(donors.begin(), donors.begin() + k, donors.end());
            double acc = 0.0;
            for (int n = 0; n < k; ++n) acc += reference.values(donors[n].second, f);
            out(i, f) = acc / k;
        }
    }
    return out;
}

Eigen::MatrixXd knn_impute(const ModalityBlock& block, std::size_t time, int k, const MaskedMatrix* reference) {
    auto slice = block.slice(time);
    return knn_impute(slice, reference ? *reference : slice, k);
}

// ---------------------------------------------------------------- one-hot

OneHotEncoder OneHotEncoder::fit(const LongitudinalCohort& train, const std::vector<OneHotDesignation>& designations) {
    OneHotEncoder enc;
    for (const auto& d : designations) {
        int m = train.modality_index(d.modality);
        if (m < 0) throw ValidationError("one-hot designation names unknown modality '" + d.modality + "'");
        const auto& block = train.modalities()[m];
        auto it = std::find(block.feature_names().begin(), block.feature_names().end(), d.feature);
        if (it == block.feature_names().end())
            throw ValidationError("one-hot designation names unknown feature '" + d.feature + "'");
        auto f = static_cast<std::size_t>(it - block.feature_names().begin());
        std::set<double> cats;
        for (std::size_t s = 0; s < block.samples(); ++s)
            for (std::size_t t = 0; t < block.times(); ++t)
                if (block.observed(s, t, f)) cats.insert(block.value(s, t, f));
        enc.categories_.emplace_back(d, std::vector<double>(cats.begin(), cats.end()));
    }
    return enc;
}

LongitudinalCohort OneHotEncoder::transform(const LongitudinalCohort& cohort, std::size_t* unseen) const {
    if (unseen) *unseen = 0;
    if (categories_.empty()) return cohort;
    std::size_t unseen_count = 0;
    std::vector<ModalityBlock> blocks;
    for (const auto& m : cohort.modalities()) {
        // Output column plan: (source feature, category index or -1 for passthrough).
        std::vector<std::pair<std::size_t, int>> plan;
        std::vector<std::string> names;
        std::vector<const std::vector<double>*> cats_of(m.features(), nullptr);
        for (const auto& [d, cats] : categories_) {
            if (d.modality != m.name()) continue;
            auto it = std::find(m.feature_names().begin(), m.feature_names().end(), d.feature);
            if (it == m.feature_names().end()) throw ValidationError("one-hot feature '" + d.feature + "' absent at transform time");
            cats_of[static_cast<std::size_t>(it - m.feature_names().begin())] = &cats;
        }
        for (std::size_t f = 0; f < m.features(); ++f) {
            if (!cats_of[f]) {
                plan.emplace_back(f, -1);
                names.push_back(m.feature_names()[f]);
                continue;
            }
            for (std::size_t c = 0; c < cats_of[f]->size(); ++c) {
                plan.emplace_back(f, static_cast<int>(c));
                names.push_back(m.feature_names()[f] + "=" + text::format_double((*cats_of[f])[c]));
            }
        }
        ModalityBlock out(m.name(), std::move(names), m.samples(), m.times());
        for (std::size_t s = 0; s < m.samples(); ++s) {
            for (std::size_t t = 0; t < m.times(); ++t) {
                for (std::size_t o = 0; o < plan.size(); ++o) {
                    auto [f, c] = plan[o];
                    if (!m.observed(s, t, f)) continue;  // stays missing; imputed later
                    if (c < 0) {
                        out.set(s, t, o, m.value(s, t, f));
                        continue;
                    }
                    const auto& cats = *cats_of[f];
                    out.set(s, t, o, cats[c] == m.value(s, t, f) ? 1.0 : 0.0);
                    if (c == 0 && std::find(cats.begin(), cats.end(), m.value(s, t, f)) == cats.end()) ++unseen_count;
                }
            }
        }
        blocks.push_back(std::move(out));
    }
    if (unseen) *unseen = unseen_count;
    return with_modalities(cohort, std::move(blocks));
}

LongitudinalCohort encode_one_hot(const LongitudinalCohort& cohort, const std::vector<OneHotDesignation>& designations) {
    return OneHotEncoder::fit(cohort, designations).transform(cohort);
}

// ---------------------------------------------------------------- scaling

Standardizer Standardizer::fit(const Eigen::MatrixXd& train) {
    if (train.rows() == 0) throw ValidationError("standardize: empty training matrix");
    Standardizer s;
    s.mean = train.colwise().mean();
    s.scale = Eigen::RowVectorXd::Ones(train.cols());
    for (Eigen::Index f = 0; f < train.cols(); ++f) {
        double var = (train.col(f).array() - s.mean(f)).square().mean();
        if (var > 1e-24) {
            s.scale(f) = std::sqrt(var);
        } else {
            s.mean(f) = 0.0;  // zero-variance columns pass through untouched
        }
    }
    return s;
}

Eigen::MatrixXd Standardizer::transform(const Eigen::MatrixXd& x) const {
    if (x.cols() != mean.cols()) throw ValidationError("standardize: feature count mismatch");
    return (x.rowwise() - mean).array().rowwise() / scale.array();
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> standardize_fit_transform(const Eigen::MatrixXd& train,
                                                                      const Eigen::MatrixXd& test) {
    auto s = Standardizer::fit(train);
    return {s.transform(train), s.transform(test)};
}

// ---------------------------------------------------------------- pipeline

FittedPreprocessor FittedPreprocessor::fit(const PreprocessPlan& plan, const LongitudinalCohort& train) {
    plan.validate();
    FittedPreprocessor p;
    p.plan_ = plan;
    p.encoder_ = OneHotEncoder::fit(train, plan.one_hot);
    auto encoded = p.encoder_.transform(train);
    auto [filtered, dropped] = filter_missing_features(encoded, plan.missing_threshold);
    p.dropped_ = std::move(dropped);
    for (const auto& m : filtered.modalities()) p.kept_.emplace_back(m.name(), m.feature_names());

    const auto T = filtered.times();
    for (const auto& m : filtered.modalities()) {
        std::vector<MaskedMatrix> per_time;
        for (std::size_t t = 0; t < T; ++t) per_time.push_back(m.slice(t));
        p.reference_.push_back(std::move(per_time));
    }

    std::vector<ModalityBlock> blocks;
    for (std::size_t mi = 0; mi < filtered.modalities().size(); ++mi) {
        const auto& m = filtered.modalities()[mi];
        std::vector<Eigen::MatrixXd> imputed;
        for (std::size_t t = 0; t < T; ++t)
            imputed.push_back(knn_impute(p.reference_[mi][t], p.reference_[mi][t], plan.impute_k));
        if (plan.standardize) {
            Eigen::MatrixXd stacked(static_cast<Eigen::Index>(m.samples() * T), static_cast<Eigen::Index>(m.features()));
            for (std::size_t t = 0; t < T; ++t)
                stacked.middleRows(static_cast<Eigen::Index>(t * m.samples()), static_cast<Eigen::Index>(m.samples())) =
                    imputed[t];
            p.scalers_.push_back(Standardizer::fit(stacked));
            for (auto& x : imputed) x = p.scalers_.back().transform(x);
        }
        ModalityBlock out(m.name(), m.feature_names(), m.samples(), T);
        for (std::size_t t = 0; t < T; ++t) out.assign_slice(t, MaskedMatrix(std::move(imputed[t])));
        blocks.push_back(std::move(out));
    }
    p.train_transformed_ = with_modalities(filtered, std::move(blocks));
    return p;
}

LongitudinalCohort FittedPreprocessor::select_kept(const LongitudinalCohort& encoded) const {
    std::vector<ModalityBlock> blocks;
    for (const auto& [name, features] : kept_) {
        int mi = encoded.modality_index(name);
        if (mi < 0) throw ValidationError("cohort lacks modality '" + name + "' seen in training");
        const auto& m = encoded.modalities()[mi];
        std::vector<std::size_t> keep;
        for (const auto& f : features) {
            auto it = std::find(m.feature_names().begin(), m.feature_names().end(), f);
            if (it == m.feature_names().end()) throw ValidationError("cohort lacks feature '" + f + "' seen in training");
            keep.push_back(static_cast<std::size_t>(it - m.feature_names().begin()));
        }
        blocks.push_back(select_features(m, keep));
    }
    return with_modalities(encoded, std::move(blocks));
}

LongitudinalCohort FittedPreprocessor::transform(const LongitudinalCohort& cohort, std::size_t* unseen) const {
    auto selected = select_kept(encoder_.transform(cohort, unseen));
    if (selected.times() != (reference_.empty() ? 0 : reference_.front().size()))
        throw ValidationError("cohort time point count differs from training");
    std::vector<ModalityBlock> blocks;
    for (std::size_t mi = 0; mi < selected.modalities().size(); ++mi) {
        const auto& m = selected.modalities()[mi];
        ModalityBlock out(m.name(), m.feature_names(), m.samples(), m.times());
        for (std::size_t t = 0; t < m.times(); ++t) {
            Eigen::MatrixXd filled = knn_impute(m.slice(t), reference_[mi][t], plan_.impute_k);
            if (plan_.standardize && filled.rows() > 0) filled = scalers_[mi].transform(filled);
            out.assign_slice(t, MaskedMatrix(std::move(filled)));
        }
        blocks.push_back(std::move(out));
    }
    return with_modalities(selected, std::move(blocks));
}

void write_dropped_features(const std::vector<DroppedFeature>& dropped, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "modality,feature,worst_missing_fraction,worst_time_point\n";
    for (const auto& d : dropped)
        out << d.modality << ',' << d.feature << ',' << text::format_double(d.worst_missing_fraction) << ','
            << d.worst_time_point << '\n';
}

}  // namespace lei
