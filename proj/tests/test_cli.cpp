#include "doctest.h"
#include "fixtures.hpp"

#include "lei/metrics.hpp"
#include "lei/text_io.hpp"

#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <sys/wait.h>

#ifndef LEI_CLI_PATH
#error "LEI_CLI_PATH must point at the lei executable"
#endif

namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

const char* kConfig = R"({
  "cohort": {"generator": {"preset": "planted", "n_samples": 150, "time_point_count": 3,
             "target_proportions": [[0.5, 0.5, 0.0], [0.4, 0.45, 0.15], [0.35, 0.4, 0.25]]}},
  "predictors": [{"algorithm": "knn", "k": 5},
                 {"algorithm": "multinomial_logistic", "epochs": 30, "learning_rate": 0.5},
                 {"algorithm": "random_forest", "trees": 5, "max_depth": 4}],
  "stacker": {"hidden_sizes": [8], "mlp_hidden": 8, "epochs": 10, "learning_rate": 0.01},
  "experiment": {"configurations": [4], "repeats": 2, "outer_folds": 3, "inner_folds": 3, "seed": 4},
  "interpret": {"inner_folds": 3, "permutation_repeats": 2}
})";

int run_cli(const std::string& args) {
    std::string cmd = std::string(LEI_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& p, const std::string& body) {
    std::ofstream out(p);
    out << body;
}

std::size_t line_count(const fs::path& p) {
    auto s = slurp(p);
    return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

}  // namespace

TEST_CASE("synth") {
    lei::testing::TempDir dir("cli_synth");
    write_text(dir.path / "c.json", kConfig);
    const auto cfg = (dir.path / "c.json").string();
    REQUIRE(run_cli("synth -c " + cfg + " -o " + (dir.path / "a").string()) == 0);
    REQUIRE(run_cli("synth -c " + cfg + " -o " + (dir.path / "b").string()) == 0);
    CHECK(slurp(dir.path / "a" / "cohort.csv") == slurp(dir.path / "b" / "cohort.csv"));
    CHECK(line_count(dir.path / "a" / "cohort.csv") == 1 + 150 * 3);
    CHECK(fs::exists(dir.path / "a" / "schema.json"));
    CHECK(fs::exists(dir.path / "a" / "manifest.json"));

    Json bad = Json::parse(kConfig);
    bad["cohort"]["generator"]["target_proportions"][1] = {0.5, 0.6, 0.0};
    write_text(dir.path / "bad.json", bad.dump());
    CHECK(run_cli("synth -c " + (dir.path / "bad.json").string() + " -o " + (dir.path / "x").string()) == 1);
    CHECK(run_cli("synth -c " + (dir.path / "absent.json").string() + " -o " + (dir.path / "x").string()) == 2);
    CHECK(run_cli("frobnicate") == 1);
}

TEST_CASE("run, rerun and thread independence") {
    lei::testing::TempDir dir("cli_run");
    write_text(dir.path / "c.json", kConfig);
    const auto cfg = (dir.path / "c.json").string();
    const auto a = dir.path / "a";
    REQUIRE(run_cli("run -c " + cfg + " -o " + a.string() + " --threads 1") == 0);
    for (const char* f : {"repeats.csv", "summary.csv", "summary.json", "manifest.json"}) CHECK(fs::exists(a / f));

    REQUIRE(run_cli("run -c " + (a / "manifest.json").string() + " -o " + (dir.path / "b").string() + " --threads 1") == 0);
    REQUIRE(run_cli("run -c " + (a / "manifest.json").string() + " -o " + (dir.path / "c").string() + " --threads 8") == 0);
    for (const char* f : {"repeats.csv", "summary.csv", "summary.json"}) {
        CHECK(slurp(a / f) == slurp(dir.path / "b" / f));
        CHECK(slurp(a / f) == slurp(dir.path / "c" / f));
    }
    auto manifest = Json::parse(slurp(a / "manifest.json"));
    CHECK(manifest["tool"] == "lei");
    CHECK(manifest["command"] == "run");
    CHECK(manifest["config"]["experiment"]["repeats"] == 2);

    CHECK(run_cli("run -c " + cfg + " -o " + (dir.path / "x").string() + " --configuration 5") == 1);
}

TEST_CASE("compare table and recomputed medians") {
    lei::testing::TempDir dir("cli_compare");
    write_text(dir.path / "c.json", kConfig);
    const auto out = dir.path / "o";
    REQUIRE(run_cli("compare -c " + (dir.path / "c.json").string() + " -o " + out.string() +
                " --configurations 1,2,3,4,early_fusion_mlp,early_fusion_longitudinal") == 0);
    CHECK(line_count(out / "summary.csv") == 1 + 6 * 2);

    std::map<std::pair<std::string, std::string>, std::vector<double>> per;
    std::ifstream in(out / "repeats.csv");
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        auto cells = lei::text::split(line);
        double v = 0.0;
        REQUIRE(lei::text::parse_double(cells[3], v));
        per[{std::string(cells[0]), std::string(cells[2])}].push_back(v);
    }
    std::ifstream sin(out / "summary.csv");
    std::getline(sin, line);
    std::size_t rows = 0;
    while (std::getline(sin, line)) {
        auto cells = lei::text::split(line);
        double med = 0.0;
        REQUIRE(lei::text::parse_double(cells[2], med));
        CHECK(std::abs(med - lei::median(per[{std::string(cells[0]), std::string(cells[1])}])) <= 1e-12);
        ++rows;
    }
    CHECK(rows == 12);

    const auto single = dir.path / "s";
    REQUIRE(run_cli("compare -c " + (dir.path / "c.json").string() + " -o " + single.string() + " --configurations 2") == 0);
    CHECK(line_count(single / "summary.csv") == 1 + 2);
}

TEST_CASE("interpret") {
    lei::testing::TempDir dir("cli_interpret");
    write_text(dir.path / "c.json", kConfig);
    const auto out = dir.path / "o";
    REQUIRE(run_cli("interpret -c " + (dir.path / "c.json").string() + " -o " + out.string() + " -k 5") == 0);
    CHECK(line_count(out / "importance.csv") == 1 + 2 * 5);
    std::ifstream in(out / "importance.csv");
    std::string line;
    std::getline(in, line);
    std::vector<std::string> times;
    while (std::getline(in, line)) {
        auto cells = lei::text::split(line);
        if (cells[1] == "1") {
            times.emplace_back(cells[0]);
            CHECK(cells[3] == "signal_000");
        }
    }
    CHECK(times == std::vector<std::string>{"t0", "t1"});
    CHECK(fs::exists(out / "trajectories.csv"));

    const auto again = dir.path / "p";
    REQUIRE(run_cli("interpret -c " + (out / "manifest.json").string() + " -o " + again.string() + " --threads 8") == 0);
    CHECK(slurp(out / "importance.csv") == slurp(again / "importance.csv"));
    CHECK(slurp(out / "trajectories.csv") == slurp(again / "trajectories.csv"));
}
