#include "doctest.h"
#include "fixtures.hpp"

#include "lei/config.hpp"
#include "lei/errors.hpp"
#include "lei/harness.hpp"
#include "lei/parallel.hpp"

#include <fstream>
#include <set>

using namespace lei;

namespace {

ExperimentConfig tiny_experiment() {
    ExperimentConfig x = default_experiment_config();
    x.predictors = {knn_spec(5), logistic_spec({0.5, 30, 1e-4}), forest_spec({5, 4, 3}, 2)};
    x.stacker.hidden_sizes = {8};
    x.stacker.mlp_hidden = 8;
    x.stacker.epochs = 15;
    x.stacker.learning_rate = 0.01;
    x.repeats = 2;
    x.outer_folds = 3;
    x.inner_folds = 3;
    x.bp.inner_folds = 3;
    x.seed = 17;
    return x;
}

LongitudinalCohort tiny_cohort() {
    auto g = lei::testing::small_generator(48, 6);
    g.missing_rate = 0.05;
    return generate(g);
}

std::string first_line(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    return line;
}

}  // namespace

TEST_CASE("method names") {
    CHECK(method_from_string("1") == lei_configuration(1));
    CHECK(method_from_string("config4") == lei_configuration(4));
    CHECK(method_from_string("early_fusion_mlp").early_fusion);
    CHECK(lei_configuration(1).regime == BpRegime::time_dependent);
    CHECK(lei_configuration(1).head == HeadKind::time_distributed_mlp);
    CHECK(lei_configuration(2).head == HeadKind::longitudinal_softmax);
    CHECK(lei_configuration(3).regime == BpRegime::time_distributed);
    CHECK(lei_configuration(4).regime == BpRegime::time_distributed);
    CHECK(lei_configuration(4).head == HeadKind::longitudinal_softmax);
    CHECK_THROWS_AS(method_from_string("5"), ValidationError);
    CHECK_THROWS_AS(lei_configuration(0), ValidationError);
}

TEST_CASE("stacker settings per method") {
    auto x = tiny_experiment();
    auto mlp = stacker_for(x, lei_configuration(1), 18, 3);
    CHECK(mlp.hidden_sizes == std::vector<int>{8});
    CHECK(mlp.input_width == 18);
    auto lon = stacker_for(x, lei_configuration(2), 18, 3);
    CHECK(lon.hidden_sizes == std::vector<int>{8, 3});
    CHECK(lon.head == HeadKind::longitudinal_softmax);
}

TEST_CASE("targets shift by one time point") {
    auto c = lei::testing::small_cohort({{0, 1, 2}, {0, 0, 1}}, {2});
    Eigen::MatrixXi want(2, 2);
    want << 1, 2, 0, 1;
    CHECK(shifted_targets(c) == want);
    auto ef = early_fusion_inputs(lei::testing::small_cohort({{0, 1, 2}, {0, 0, 1}}, {2, 3}));
    CHECK(ef.size() == 2);
    CHECK(ef[0].cols() == 5);
}

TEST_CASE("fold plans") {
    auto c = tiny_cohort();
    auto x = tiny_experiment();
    auto a = make_fold_plan(c, x, 0);
    auto b = make_fold_plan(c, x, 0);
    CHECK(a.outer == b.outer);
    CHECK(a.inner == b.inner);
    CHECK(make_fold_plan(c, x, 1).outer != a.outer);
    CHECK(a.outer.size() == c.samples());
    REQUIRE(a.inner.size() == 3);
    for (int k = 0; k < 3; ++k) {
        auto held = std::count(a.outer.begin(), a.outer.end(), k);
        CHECK(a.inner[static_cast<std::size_t>(k)].size() == c.samples() - static_cast<std::size_t>(held));
        std::set<int> ids(a.inner[static_cast<std::size_t>(k)].begin(), a.inner[static_cast<std::size_t>(k)].end());
        CHECK(ids == std::set<int>{0, 1, 2});
    }
}

TEST_CASE("experiment validation") {
    auto x = tiny_experiment();
    x.outer_folds = 1;
    CHECK_THROWS_AS(x.validate(), ValidationError);
    x = tiny_experiment();
    x.repeats = 0;
    CHECK_THROWS_AS(x.validate(), ValidationError);
    x = tiny_experiment();
    x.predictors.clear();
    CHECK_THROWS_AS(x.validate(), ValidationError);
}

TEST_CASE("comparison run") {
    auto c = tiny_cohort();
    auto x = tiny_experiment();
    auto report = compare_configurations(c, x, true);
    REQUIRE(report.methods.size() == 6);
    CHECK(report.methods[0].method == "config1");
    CHECK(report.methods[5].method == "early_fusion_longitudinal");
    CHECK(report.time_points == std::vector<std::string>{"t1", "t2"});
    CHECK(report.audit.units == 6);
    CHECK(report.audit.inner_violations == 0);
    CHECK(report.audit.outer_violations == 0);
    CHECK(report.audit.time_dependent_models == 2 * 2 * 3);
    CHECK(report.audit.time_distributed_models == 2 * 3);
    for (const auto& m : report.methods) {
        REQUIRE(m.macro_f.size() == 2);
        CHECK(m.macro_f[0].size() == 2);
        CHECK(m.median.size() == 2);
        for (const auto& r : m.macro_f)
            for (double f : r) CHECK((f >= 0.0 && f <= 1.0));
        int tested = m.confusion[0][0].sum();
        CHECK(tested == 48);
    }

    SUBCASE("single configuration matches the paired comparison") {
        auto solo = run_experiment(c, x, 3);
        CHECK(solo.methods[0].macro_f == report.methods[2].macro_f);
    }
    SUBCASE("deterministic across thread counts") {
        const int saved = thread_count();
        set_thread_count(3);
        auto again = compare_configurations(c, x, true);
        set_thread_count(saved);
        for (std::size_t i = 0; i < 6; ++i) CHECK(again.methods[i].macro_f == report.methods[i].macro_f);
    }
    SUBCASE("report files") {
        lei::testing::TempDir dir("harness");
        write_repeat_table(report, dir.path / "repeats.csv");
        write_summary_table(report, dir.path / "summary.csv");
        write_summary_json(report, dir.path / "summary.json");
        CHECK(first_line(dir.path / "repeats.csv") == "configuration,repeat,time_point,macro_f,f_CN,f_MCI,f_Dementia");
        CHECK(first_line(dir.path / "summary.csv") == "configuration,time_point,median,se");
        std::ifstream in(dir.path / "summary.json");
        auto j = Json::parse(in);
        CHECK(j.contains("audit"));
    }
}

TEST_CASE("generator presets") {
    CHECK(generator_preset("default").n_samples == 749);
    auto inter = generator_preset("interaction");
    CHECK(inter.signal_kind == SignalKind::interaction);
    CHECK(inter.modality_specs[0].noise_scale == 0.5 * generator_preset("default").modality_specs[0].noise_scale);
    CHECK(inter.modality_specs[2].noise_scale == 1.0);
    CHECK(generator_preset("planted").modality_specs.size() == 3);
    CHECK_THROWS_AS(generator_preset("adni"), ValidationError);
}

TEST_CASE("config parsing") {
    Json j = Json::parse(R"({
        "cohort": {"generator": {"preset": "planted", "n_samples": 80}},
        "predictors": [{"algorithm": "knn", "k": 7}],
        "stacker": {"hidden_sizes": [16], "epochs": 5},
        "experiment": {"configurations": [1, "config4"], "repeats": 3, "seed": 9}
    })");
    auto c = run_config_from_json(j);
    REQUIRE(c.cohort.generator.has_value());
    CHECK(c.cohort.generator->n_samples == 80);
    CHECK(c.experiment.repeats == 3);
    CHECK(c.experiment.stacker.epochs == 5);
    CHECK(c.methods == std::vector<Method>{lei_configuration(1), lei_configuration(4)});
    CHECK(c.experiment.predictors.size() == 1);

    auto full = to_json(c);
    CHECK(to_json(run_config_from_json(full)) == full);
    Json manifest{{"tool", "lei"}, {"config", full}};
    CHECK(to_json(run_config_from_json(manifest)) == full);

    auto fails = [](const char* text) {
        try {
            run_config_from_json(Json::parse(text));
        } catch (const ValidationError& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };
    CHECK(fails(R"({"cohort": {"generator": {}}, "stacker": {"epoch": 3}})") == "stacker.epoch: unknown field");
    CHECK(fails(R"({"cohort": {"generator": {}}, "experiment": {"repeats": "many"}})") ==
          "experiment.repeats: wrong type");
    CHECK(fails(R"({"experiment": {}})") == "config.cohort: required (generator or file + schema)");
    CHECK(fails(R"({"cohort": {"generator": {}}, "experiment": {"configurations": [5]}})").rfind(
              "experiment.configurations[0]", 0) == 0);
}
