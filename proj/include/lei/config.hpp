#pragma once

#include "lei/harness.hpp"
#include "lei/interpret.hpp"
#include "lei/synth.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace lei {

using Json = nlohmann::json;

/// Generated cohort or a delimited file with its schema.
struct CohortSource {
    std::optional<GeneratorConfig> generator;
    std::filesystem::path file;
    std::filesystem::path schema;
};

struct RunConfig {
    CohortSource cohort;
    ExperimentConfig experiment;
    /// Methods for `run` (first entry) and `compare` (all entries).
    std::vector<Method> methods;
    InterpretConfig interpret;
    /// True when `preprocess.one_hot` was given explicitly.
    bool one_hot_explicit = false;
};

/// Named generator presets: `default`, `interaction`, `planted`.
GeneratorConfig generator_preset(const std::string& name);

GeneratorConfig generator_from_json(const Json& j, const std::string& where = "generator");
Json to_json(const GeneratorConfig& c);

PredictorSpec predictor_from_json(const Json& j, const std::string& where);
Json to_json(const PredictorSpec& p);

/// Parses a config document; a manifest's `config` member is accepted too.
/// Relative paths resolve against `base_dir`.
RunConfig run_config_from_json(const Json& j, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
/// Every default materialized.
Json to_json(const RunConfig& c);

struct LoadedCohort {
    LongitudinalCohort cohort;
    std::vector<OneHotDesignation> one_hot;
};

/// Builds or reads the cohort; fills designations from the generator or schema.
LoadedCohort load_cohort_source(const CohortSource& source);
/// Loads the config's cohort; unless given explicitly, its one-hot
/// designations become the preprocessing plan's.
LoadedCohort resolve_cohort(RunConfig& config);

}  // namespace lei
