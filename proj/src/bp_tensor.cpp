#include "lei/bp_tensor.hpp"

#include "lei/errors.hpp"
#include "lei/folds.hpp"
#include "lei/parallel.hpp"
#include "lei/random.hpp"
#include "lei/text_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace lei {

std::string to_string(BpRegime r) {
    return r == BpRegime::time_dependent ? "time_dependent" : "time_distributed";
}

std::string BpColumn::name() const { return modality + "|" + algorithm + "|" + std::to_string(class_index); }

const FittedPredictor& FittedBpBank::model(std::size_t t, std::size_t m, std::size_t a) const {
    const auto M = modality_names.size(), A = algorithm_names.size();
    if (regime == BpRegime::time_distributed) return models.at(m * A + a);
    return models.at((t * M + m) * A + a);
}

std::vector<int> inner_fold_assignment(const LongitudinalCohort& train, int folds, std::uint64_t seed) {
    if (train.times() == 0) throw ValidationError("cohort has no input time points");
    auto strata = train.labels_at(train.times() - 1);
    return stratified_folds(strata, folds, seed);
}

Eigen::MatrixXd flatten_time_blocks(std::vector<TimeBlock> blocks, double index_mean, double index_scale) {
    if (blocks.empty()) return {};
    std::stable_sort(blocks.begin(), blocks.end(),
                     [](const TimeBlock& a, const TimeBlock& b) { return a.time_index < b.time_index; });
    const auto n = blocks.front().features.rows();
    const auto f = blocks.front().features.cols();
    Eigen::MatrixXd out(n * static_cast<Eigen::Index>(blocks.size()), f + 1);
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        if (blocks[b].features.rows() != n || blocks[b].features.cols() != f)
            throw ValidationError("flatten_time_blocks: blocks differ in extent");
        auto rows = out.middleRows(static_cast<Eigen::Index>(b) * n, n);
        rows.leftCols(f) = blocks[b].features;
        rows.col(f).setConstant((static_cast<double>(blocks[b].time_index) - index_mean) / index_scale);
    }
    return out;
}

namespace {

void check_inputs(const LongitudinalCohort& train, const std::vector<PredictorSpec>& specs,
                  std::span<const int> folds) {
    if (specs.empty()) throw ValidationError("at least one predictor spec required");
    for (const auto& s : specs) s.validate();
    if (folds.size() != train.samples()) throw ValidationError("fold assignment must cover every training sample");
    for (const auto& m : train.modalities())
        if (m.missing_count() != 0)
            throw ValidationError("modality '" + m.name() + "' has missing cells; preprocess before generating base predictions");
}

Eigen::MatrixXd rows_of(const Eigen::MatrixXd& x, const std::vector<std::size_t>& rows) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
    return out;
}

std::vector<int> labels_of(const std::vector<int>& y, const std::vector<std::size_t>& rows) {
    std::vector<int> out;
    out.reserve(rows.size());
    for (auto r : rows) out.push_back(y[r]);
    return out;
}

std::string absent_classes(const std::vector<int>& y, int C) {
    std::vector<bool> seen(static_cast<std::size_t>(C), false);
    for (int v : y) seen[v] = true;
    std::string out;
    for (int c = 0; c < C; ++c)
        if (!seen[c]) out += (out.empty() ? "" : ",") + std::to_string(c);
    return out;
}

BasePredictionTensor empty_tensor(const LongitudinalCohort& cohort, const std::vector<std::string>& modalities,
                                  const std::vector<std::string>& algorithms, int C) {
    BasePredictionTensor t;
    for (const auto& m : modalities)
        for (const auto& a : algorithms)
            for (int c = 0; c < C; ++c) t.columns.push_back({m, a, c});
    t.sample_ids = cohort.sample_ids();
    t.time_point_names = cohort.time_point_names();
    t.steps.assign(cohort.times(), Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(cohort.samples()),
                                                         static_cast<Eigen::Index>(t.columns.size())));
    return t;
}

PredictorSpec seeded(const PredictorSpec& spec, std::uint64_t seed, std::initializer_list<std::uint64_t> coords) {
    PredictorSpec out = spec;
    out.seed = derive_seed(seed ^ spec.seed, coords);
    return out;
}

FittedBpBank bank_skeleton(BpRegime regime, const LongitudinalCohort& train, const std::vector<PredictorSpec>& specs) {
    FittedBpBank bank;
    bank.regime = regime;
    for (const auto& m : train.modalities()) {
        bank.modality_names.push_back(m.name());
        bank.feature_counts.push_back(m.features());
    }
    for (const auto& s : specs) bank.algorithm_names.push_back(s.name());
    bank.times = train.times();
    bank.class_count = train.class_count();
    return bank;
}

}  // namespace

BpResult generate_time_dependent(const LongitudinalCohort& train, const std::vector<PredictorSpec>& specs,
                                 std::span<const int> fold_assignment, std::uint64_t seed, const BpOptions&) {
    check_inputs(train, specs, fold_assignment);
    const std::size_t T = train.times(), M = train.modalities().size(), A = specs.size(), N = train.samples();
    const int C = train.class_count();
    const int K = fold_assignment.empty() ? 0 : *std::max_element(fold_assignment.begin(), fold_assignment.end()) + 1;

    BpResult result;
    result.bank = bank_skeleton(BpRegime::time_dependent, train, specs);
    result.tensor = empty_tensor(train, result.bank.modality_names, result.bank.algorithm_names, C);
    result.bank.models.resize(T * M * A);

    std::vector<std::vector<std::size_t>> test_rows(static_cast<std::size_t>(K)), train_rows(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) {
        test_rows[k] = fold_members(fold_assignment, k);
        train_rows[k] = fold_complement(fold_assignment, k);
    }

    // Task (t, m, a, k) with k == K meaning the full-training refit.
    const std::size_t per_model = static_cast<std::size_t>(K) + 1;
    const std::size_t tasks = T * M * A * per_model;
    std::vector<std::uint8_t> coverage(T * M * A * N, 0);
    std::vector<std::size_t> breaches(tasks, 0);
    std::vector<std::string> warnings(tasks);

    std::vector<Eigen::MatrixXd> slices(T * M);
    std::vector<std::vector<int>> labels(T);
    for (std::size_t t = 0; t < T; ++t) {
        labels[t] = train.labels_at(t);
        for (std::size_t m = 0; m < M; ++m) slices[t * M + m] = train.modalities()[m].slice(t).values;
    }

    parallel_for(tasks, [&](std::size_t task) {
        const std::size_t k = task % per_model;
        const std::size_t a = (task / per_model) % A;
        const std::size_t m = (task / per_model / A) % M;
        const std::size_t t = task / per_model / A / M;
        const auto& x = slices[t * M + m];
        const auto spec = seeded(specs[a], seed, {0, t, m, a, k});
        const std::size_t model_index = (t * M + m) * A + a;

        if (k == static_cast<std::size_t>(K)) {
            result.bank.models[model_index] = fit(spec, x, labels[t], C);
            return;
        }
        auto y_train = labels_of(labels[t], train_rows[k]);
        if (auto missing = absent_classes(y_train, C); !missing.empty())
            warnings[task] = "time " + train.time_point_names()[t] + ", modality " + train.modalities()[m].name() +
                             ", inner fold " + std::to_string(k) + ": classes {" + missing + "} absent from training";
        auto model = fit(spec, rows_of(x, train_rows[k]), y_train, C);
        Eigen::MatrixXd p = model.predict_proba(rows_of(x, test_rows[k]));

        std::vector<bool> in_train(N, false);
        for (auto r : train_rows[k]) in_train[r] = true;
        auto& step = result.tensor.steps[t];
        const auto col = static_cast<Eigen::Index>((m * A + a) * static_cast<std::size_t>(C));
        for (std::size_t i = 0; i < test_rows[k].size(); ++i) {
            const auto s = test_rows[k][i];
            if (in_train[s]) ++breaches[task];
            ++coverage[model_index * N + s];
            step.block(static_cast<Eigen::Index>(s), col, 1, C) = p.row(static_cast<Eigen::Index>(i));
        }
    });

    result.audit.fits = tasks;
    for (auto b : breaches) result.audit.violations += b;
    for (auto c : coverage) result.audit.violations += c == 1 ? 0 : 1;
    for (auto& w : warnings)
        if (!w.empty()) result.audit.warnings.push_back(std::move(w));
    return result;
}

BpResult generate_time_distributed(const LongitudinalCohort& train, const std::vector<PredictorSpec>& specs,
                                   std::span<const int> fold_assignment, std::uint64_t seed, const BpOptions& options) {
    check_inputs(train, specs, fold_assignment);
    const std::size_t T = train.times(), M = train.modalities().size(), A = specs.size(), N = train.samples();
    const int C = train.class_count();
    const int K = fold_assignment.empty() ? 0 : *std::max_element(fold_assignment.begin(), fold_assignment.end()) + 1;

    BpResult result;
    result.bank = bank_skeleton(BpRegime::time_distributed, train, specs);
    result.tensor = empty_tensor(train, result.bank.modality_names, result.bank.algorithm_names, C);
    result.bank.models.resize(M * A);
    if (options.standardize_time_index && T > 1) {
        // Population statistics of 0..T-1, which every sample contributes once.
        double mean = (static_cast<double>(T) - 1.0) / 2.0;
        double var = (static_cast<double>(T * T) - 1.0) / 12.0;
        result.bank.time_index_mean = mean;
        result.bank.time_index_scale = std::sqrt(var);
    }

    // Flattened rows (t, s) sit at t * N + s; folds remain keyed by sample.
    std::vector<Eigen::MatrixXd> flat(M);
    for (std::size_t m = 0; m < M; ++m) {
        std::vector<TimeBlock> blocks;
        for (std::size_t t = 0; t < T; ++t) blocks.push_back({t, train.modalities()[m].slice(t).values});
        flat[m] = flatten_time_blocks(std::move(blocks), result.bank.time_index_mean, result.bank.time_index_scale);
    }
    std::vector<int> flat_labels(T * N);
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t s = 0; s < N; ++s) flat_labels[t * N + s] = train.labels().labels(s, t);

    auto expand = [&](const std::vector<std::size_t>& samples) {
        std::vector<std::size_t> rows;
        rows.reserve(samples.size() * T);
        for (std::size_t t = 0; t < T; ++t)
            for (auto s : samples) rows.push_back(t * N + s);
        return rows;
    };
    std::vector<std::vector<std::size_t>> test_samples(static_cast<std::size_t>(K)), train_samples(static_cast<std::size_t>(K));
    std::vector<std::vector<std::size_t>> test_rows(static_cast<std::size_t>(K)), train_rows(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) {
        test_samples[k] = fold_members(fold_assignment, k);
        train_samples[k] = fold_complement(fold_assignment, k);
        test_rows[k] = expand(test_samples[k]);
        train_rows[k] = expand(train_samples[k]);
    }

    const std::size_t per_model = static_cast<std::size_t>(K) + 1;
    const std::size_t tasks = M * A * per_model;
    std::vector<std::uint8_t> coverage(M * A * T * N, 0);
    std::vector<std::size_t> breaches(tasks, 0);
    std::vector<std::string> warnings(tasks);

    parallel_for(tasks, [&](std::size_t task) {
        const std::size_t k = task % per_model;
        const std::size_t a = (task / per_model) % A;
        const std::size_t m = task / per_model / A;
        const auto spec = seeded(specs[a], seed, {1, m, a, k});
        const std::size_t model_index = m * A + a;

        if (k == static_cast<std::size_t>(K)) {
            result.bank.models[model_index] = fit(spec, flat[m], flat_labels, C);
            return;
        }
        auto y_train = labels_of(flat_labels, train_rows[k]);
        if (auto missing = absent_classes(y_train, C); !missing.empty())
            warnings[task] = "modality " + train.modalities()[m].name() + ", inner fold " + std::to_string(k) +
                             ": classes {" + missing + "} absent from training";
        auto model = fit(spec, rows_of(flat[m], train_rows[k]), y_train, C);
        Eigen::MatrixXd p = model.predict_proba(rows_of(flat[m], test_rows[k]));

        std::vector<bool> in_train(N, false);
        for (auto s : train_samples[k]) in_train[s] = true;
        const auto col = static_cast<Eigen::Index>(model_index * static_cast<std::size_t>(C));
        for (std::size_t i = 0; i < test_rows[k].size(); ++i) {
            const auto t = test_rows[k][i] / N, s = test_rows[k][i] % N;
            if (in_train[s]) ++breaches[task];
            ++coverage[(model_index * T + t) * N + s];
            result.tensor.steps[t].block(static_cast<Eigen::Index>(s), col, 1, C) = p.row(static_cast<Eigen::Index>(i));
        }
    });

    result.audit.fits = tasks;
    for (auto b : breaches) result.audit.violations += b;
    for (auto c : coverage) result.audit.violations += c == 1 ? 0 : 1;
    for (auto& w : warnings)
        if (!w.empty()) result.audit.warnings.push_back(std::move(w));
    return result;
}

BpResult generate_time_dependent(const LongitudinalCohort& train, const std::vector<PredictorSpec>& specs,
                                 int inner_folds, std::uint64_t seed) {
    auto folds = inner_fold_assignment(train, inner_folds, seed);
    return generate_time_dependent(train, specs, folds, seed);
}

BpResult generate_time_distributed(const LongitudinalCohort& train, const std::vector<PredictorSpec>& specs,
                                   int inner_folds, std::uint64_t seed) {
    auto folds = inner_fold_assignment(train, inner_folds, seed);
    return generate_time_distributed(train, specs, folds, seed);
}

BpResult generate_base_predictions(BpRegime regime, const LongitudinalCohort& train,
                                   const std::vector<PredictorSpec>& specs, std::span<const int> fold_assignment,
                                   std::uint64_t seed, const BpOptions& options) {
    return regime == BpRegime::time_dependent
               ? generate_time_dependent(train, specs, fold_assignment, seed, options)
               : generate_time_distributed(train, specs, fold_assignment, seed, options);
}

BasePredictionTensor apply_bank(const FittedBpBank& bank, const LongitudinalCohort& cohort) {
    const std::size_t M = bank.modality_names.size(), A = bank.algorithm_names.size();
    if (cohort.times() != bank.times) throw ValidationError("apply_bank: time point count differs from training");
    if (cohort.modalities().size() != M) throw ValidationError("apply_bank: modality count differs from training");
    for (std::size_t m = 0; m < M; ++m) {
        const auto& block = cohort.modalities()[m];
        if (block.name() != bank.modality_names[m] || block.features() != bank.feature_counts[m])
            throw ValidationError("apply_bank: modality '" + block.name() + "' does not match the training schema");
        if (block.missing_count() != 0) throw ValidationError("apply_bank: cohort has missing cells");
    }
    const int C = bank.class_count;
    auto tensor = empty_tensor(cohort, bank.modality_names, bank.algorithm_names, C);
    if (cohort.samples() == 0) return tensor;

    const std::size_t T = bank.times;
    parallel_for(M * A, [&](std::size_t task) {
        const std::size_t m = task / A, a = task % A;
        const auto col = static_cast<Eigen::Index>(task * static_cast<std::size_t>(C));
        const auto& block = cohort.modalities()[m];
        if (bank.regime == BpRegime::time_dependent) {
            for (std::size_t t = 0; t < T; ++t)
                tensor.steps[t].middleCols(col, C) = bank.model(t, m, a).predict_proba(block.slice(t).values);
            return;
        }
        std::vector<TimeBlock> blocks;
        for (std::size_t t = 0; t < T; ++t) blocks.push_back({t, block.slice(t).values});
        Eigen::MatrixXd p =
            bank.model(0, m, a).predict_proba(flatten_time_blocks(std::move(blocks), bank.time_index_mean, bank.time_index_scale));
        const auto n = static_cast<Eigen::Index>(cohort.samples());
        for (std::size_t t = 0; t < T; ++t)
            tensor.steps[t].middleCols(col, C) = p.middleRows(static_cast<Eigen::Index>(t) * n, n);
    });
    return tensor;
}

void export_tensor(const BasePredictionTensor& tensor, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "sample_id,time_point";
    for (const auto& c : tensor.columns) out << ',' << c.name();
    out << '\n';
    for (std::size_t s = 0; s < tensor.samples(); ++s) {
        for (std::size_t t = 0; t < tensor.times(); ++t) {
            out << tensor.sample_ids[s] << ',' << tensor.time_point_names[t];
            for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(tensor.width()); ++c)
                out << ',' << text::format_double(tensor.steps[t](static_cast<Eigen::Index>(s), c));
            out << '\n';
        }
    }
}

}  // namespace lei
