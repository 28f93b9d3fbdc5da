#include "doctest.h"
#include "fixtures.hpp"
#include "oracles.hpp"

#include "lei/errors.hpp"
#include "lei/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace lei;
using lei::testing::small_cohort;

namespace {

MaskedMatrix six_by_four() {
    Eigen::MatrixXd v(6, 4);
    v << 1.0, 2.0, 0.5, 7.0,
         1.5, 2.5, 0.0, 6.0,
         3.0, 1.0, 2.0, 5.0,
         0.2, 4.0, 1.0, 8.0,
         2.2, 0.3, 3.5, 4.0,
         1.1, 2.2, 0.7, 6.5;
    MaskedMatrix m(v);
    for (auto [r, c] : {std::pair{0, 2}, std::pair{3, 0}, std::pair{5, 3}}) {
        m.observed(r, c) = false;
        m.values(r, c) = 0.0;
    }
    return m;
}

}  // namespace

TEST_CASE("knn imputation matches brute force") {
    auto m = six_by_four();
    auto got = knn_impute(m, m, 2);
    auto want = *lei::testing::brute_force_impute(m, m, 2);
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);
    for (Eigen::Index r = 0; r < 6; ++r)
        for (Eigen::Index c = 0; c < 4; ++c)
            if (m.observed(r, c)) CHECK(got(r, c) == m.values(r, c));
}

TEST_CASE("knn imputation identity and duplicates") {
    Eigen::MatrixXd v(3, 2);
    v << 1, 2, 3, 4, 5, 6;
    MaskedMatrix full(v);
    CHECK(knn_impute(full, full, 2) == v);

    Eigen::MatrixXd d(3, 3);
    d << 1, 2, 9, 1, 2, 0, 7, 7, 1;
    MaskedMatrix dup(d);
    dup.observed(1, 2) = false;
    dup.values(1, 2) = 0;
    CHECK(knn_impute(dup, dup, 1)(1, 2) == 9.0);
}

TEST_CASE("knn imputation from a training reference") {
    auto train = six_by_four();
    Eigen::MatrixXd q(1, 4);
    q << 1.0, 2.0, 0.0, 7.0;
    MaskedMatrix query(q);
    query.observed(0, 2) = false;
    auto got = knn_impute(query, train, 3);
    CHECK(got(0, 2) == doctest::Approx((*lei::testing::brute_force_impute(query, train, 3))(0, 2)).epsilon(1e-14));
}

TEST_CASE("knn imputation errors") {
    auto m = six_by_four();
    CHECK_THROWS_AS(knn_impute(m, m, 6), ValidationError);
    for (Eigen::Index r = 0; r < 6; ++r) m.observed(r, 1) = false;
    CHECK_THROWS_AS(knn_impute(m, m, 1), ValidationError);
}

TEST_CASE("missing feature filter") {
    std::vector<std::vector<int>> paths(10, {0, 0, 0, 0});
    auto c = small_cohort(paths, {2}, 3);
    auto [same, none] = filter_missing_features(c, 0.30);
    CHECK(same == c);
    CHECK(none.empty());

    auto blocks = c.modalities();
    for (std::size_t s = 0; s < 3; ++s) blocks[0].set_missing(s, 1, 0);
    for (std::size_t s = 0; s < 2; ++s)
        for (std::size_t t = 0; t < 3; ++t) blocks[0].set_missing(s + 5, t, 1);
    LongitudinalCohort holed(c.sample_ids(), c.time_point_names(), c.target_time_point(), blocks, c.labels(), true);
    auto [kept, dropped] = filter_missing_features(holed, 0.30);
    REQUIRE(dropped.size() == 1);
    CHECK(dropped[0].feature == "m0_f0");
    CHECK(dropped[0].worst_time_point == "t1");
    CHECK(dropped[0].worst_missing_fraction == doctest::Approx(0.3));
    CHECK(kept.modalities()[0].feature_names() == std::vector<std::string>{"m0_f1"});

    auto all_gone = blocks;
    for (std::size_t s = 0; s < 5; ++s) all_gone[0].set_missing(s, 0, 1);
    LongitudinalCohort empty(c.sample_ids(), c.time_point_names(), c.target_time_point(), all_gone, c.labels(), true);
    CHECK_THROWS_AS(filter_missing_features(empty, 0.30), ValidationError);
}

TEST_CASE("one-hot encoding") {
    std::vector<std::vector<int>> paths(6, {0, 0});
    auto c = small_cohort(paths, {2});
    auto blocks = c.modalities();
    for (std::size_t s = 0; s < 6; ++s) blocks[0].set(s, 0, 1, static_cast<double>(s % 3));
    blocks[0].set_missing(4, 0, 1);
    LongitudinalCohort coded(c.sample_ids(), c.time_point_names(), c.target_time_point(), blocks, c.labels(), true);

    auto enc = encode_one_hot(coded, {{"mod0", "m0_f1"}});
    const auto& b = enc.modalities()[0];
    REQUIRE(b.features() == 4);
    CHECK(b.feature_names()[0] == "m0_f0");
    for (std::size_t s = 0; s < 6; ++s) {
        if (s == 4) {
            for (std::size_t f = 1; f < 4; ++f) CHECK_FALSE(b.observed(s, 0, f));
            continue;
        }
        double sum = b.value(s, 0, 1) + b.value(s, 0, 2) + b.value(s, 0, 3);
        CHECK(sum == 1.0);
        CHECK(b.value(s, 0, 1 + s % 3) == 1.0);
    }
    CHECK(encode_one_hot(coded, {}) == coded);

    auto train = subset_by_indices(coded, {0, 1, 3});
    auto encoder = OneHotEncoder::fit(train, {{"mod0", "m0_f1"}});
    std::size_t unseen = 0;
    auto out = encoder.transform(coded, &unseen);
    CHECK(unseen == 2);
    CHECK(out.modalities()[0].features() == 3);
    CHECK(out.modalities()[0].value(2, 0, 1) == 0.0);
    CHECK(out.modalities()[0].value(2, 0, 2) == 0.0);
}

TEST_CASE("standardization") {
    Eigen::MatrixXd train(4, 2);
    train << 8, 5, 12, 5, 8, 5, 12, 5;
    auto s = Standardizer::fit(train);
    Eigen::MatrixXd x(1, 2);
    x << 12, 5;
    auto z = s.transform(x);
    CHECK(z(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(z(0, 1) == 5.0);

    Rng rng(9);
    std::normal_distribution<double> n;
    Eigen::MatrixXd a(50, 3), b(20, 3);
    for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = n(rng);
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = 1.0 + n(rng);
    auto [za, zb] = standardize_fit_transform(a, b);
    CHECK(za.colwise().mean().cwiseAbs().maxCoeff() < 1e-12);
    CHECK(zb.colwise().mean().cwiseAbs().minCoeff() > 1e-3);
}

TEST_CASE("fitted preprocessor uses training rows only") {
    auto cfg = lei::testing::small_generator(50);
    cfg.missing_rate = 0.1;
    cfg.categorical = {{"noise", 2, 3, "site"}};
    auto c = generate(cfg);
    std::vector<std::size_t> train_rows, test_rows;
    for (std::size_t s = 0; s < 50; ++s) (s < 35 ? train_rows : test_rows).push_back(s);
    PreprocessPlan plan;
    plan.impute_k = 3;
    plan.one_hot = {{"noise", "site"}};
    auto train = subset_by_indices(c, train_rows);
    auto fitted = FittedPreprocessor::fit(plan, train);
    auto test = subset_by_indices(c, test_rows);
    auto out = fitted.transform(test);
    for (const auto& m : out.modalities()) CHECK(m.missing_count() == 0);
    CHECK(fitted.transform(train) == fitted.transformed_training());

    // Reordering test rows permutes the output and leaves fitted state alone.
    std::vector<std::size_t> reversed(test_rows.rbegin(), test_rows.rend());
    auto out_rev = fitted.transform(subset_by_indices(c, reversed));
    for (std::size_t m = 0; m < out.modalities().size(); ++m)
        for (std::size_t s = 0; s < 15; ++s)
            for (std::size_t t = 0; t < out.times(); ++t)
                for (std::size_t f = 0; f < out.modalities()[m].features(); ++f)
                    CHECK(out.modalities()[m].value(s, t, f) == out_rev.modalities()[m].value(14 - s, t, f));

    // Standardized training columns have zero mean over samples and times.
    const auto& tr = fitted.transformed_training().modalities()[0];
    double mean = 0.0;
    for (std::size_t t = 0; t < tr.times(); ++t)
        for (std::size_t s = 0; s < tr.samples(); ++s) mean += tr.value(s, t, 0);
    CHECK(std::abs(mean) < 1e-9);
}
