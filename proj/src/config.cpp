#include "lei/config.hpp"

#include "lei/errors.hpp"

#include <fstream>
#include <set>

namespace lei {

namespace {

/// Strict view of a JSON object: unread keys are reported by finish().
class Fields {
public:
    Fields(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw ValidationError(where_ + ": expected an object");
    }

    [[nodiscard]] bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

    template <typename T>
    T get(const std::string& key, T fallback) {
        seen_.insert(key);
        if (!has(key)) return fallback;
        try {
            return j_.at(key).get<T>();
        } catch (const nlohmann::json::exception&) {
            throw ValidationError(path(key) + ": wrong type");
        }
    }

    const Json& node(const std::string& key) {
        seen_.insert(key);
        return j_.at(key);
    }

    [[nodiscard]] std::string path(const std::string& key) const { return where_ + "." + key; }

    void finish() const {
        for (const auto& [key, value] : j_.items())
            if (!seen_.count(key)) throw ValidationError(path(key) + ": unknown field");
    }

private:
    const Json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

std::string indexed(const std::string& where, std::size_t i) { return where + "[" + std::to_string(i) + "]"; }

SignalKind signal_kind_from_string(const std::string& s, const std::string& where) {
    if (s == "affine") return SignalKind::affine;
    if (s == "interaction") return SignalKind::interaction;
    throw ValidationError(where + ": unknown signal kind '" + s + "'");
}

std::string to_string(SignalKind k) { return k == SignalKind::affine ? "affine" : "interaction"; }

SplitFeatures split_from_string(const std::string& s, const std::string& where) {
    if (s == "sqrt") return SplitFeatures::sqrt;
    if (s == "all") return SplitFeatures::all;
    if (s == "log2") return SplitFeatures::log2;
    throw ValidationError(where + ": expected sqrt, all or log2");
}

std::string to_string(SplitFeatures s) {
    switch (s) {
        case SplitFeatures::sqrt: return "sqrt";
        case SplitFeatures::all: return "all";
        case SplitFeatures::log2: return "log2";
    }
    return "?";
}

PreprocessPlan preprocess_from_json(const Json& j, bool* one_hot_explicit) {
    Fields f(j, "preprocess");
    PreprocessPlan p;
    p.missing_threshold = f.get("missing_threshold", p.missing_threshold);
    p.impute_k = f.get("impute_k", p.impute_k);
    p.standardize = f.get("standardize", p.standardize);
    if (f.has("one_hot")) {
        *one_hot_explicit = true;
        const auto& list = f.node("one_hot");
        if (!list.is_array()) throw ValidationError("preprocess.one_hot: expected an array");
        for (std::size_t i = 0; i < list.size(); ++i) {
            Fields e(list[i], indexed("preprocess.one_hot", i));
            p.one_hot.push_back({e.get<std::string>("modality", ""), e.get<std::string>("feature", "")});
            e.finish();
        }
    } else {
        f.get<Json>("one_hot", {});
    }
    f.finish();
    try {
        p.validate();
    } catch (const ValidationError& e) {
        throw ValidationError(std::string("preprocess: ") + e.what());
    }
    return p;
}

Json to_json(const PreprocessPlan& p) {
    Json one_hot = Json::array();
    for (const auto& d : p.one_hot) one_hot.push_back({{"modality", d.modality}, {"feature", d.feature}});
    return {{"missing_threshold", p.missing_threshold},
            {"impute_k", p.impute_k},
            {"standardize", p.standardize},
            {"one_hot", one_hot}};
}

LogisticParams logistic_from(Fields& f) {
    LogisticParams p;
    p.learning_rate = f.get("learning_rate", p.learning_rate);
    p.epochs = f.get("epochs", p.epochs);
    p.l2 = f.get("l2", p.l2);
    return p;
}

Json to_json(const LogisticParams& p) {
    return {{"learning_rate", p.learning_rate}, {"epochs", p.epochs}, {"l2", p.l2}};
}

std::vector<PredictorSpec> predictors_from_json(const Json& j, const std::string& where) {
    if (!j.is_array() || j.empty()) throw ValidationError(where + ": expected a non-empty array");
    std::vector<PredictorSpec> out;
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(predictor_from_json(j[i], indexed(where, i)));
    return out;
}

Json to_json(const std::vector<PredictorSpec>& specs) {
    Json out = Json::array();
    for (const auto& s : specs) out.push_back(to_json(s));
    return out;
}

StackerConfig stacker_from_json(const Json& j) {
    Fields f(j, "stacker");
    StackerConfig s;
    s.hidden_sizes = f.get("hidden_sizes", s.hidden_sizes);
    s.mlp_hidden = f.get("mlp_hidden", s.mlp_hidden);
    s.epochs = f.get("epochs", s.epochs);
    s.learning_rate = f.get("learning_rate", s.learning_rate);
    s.beta1 = f.get("beta1", s.beta1);
    s.beta2 = f.get("beta2", s.beta2);
    s.epsilon = f.get("epsilon", s.epsilon);
    f.finish();
    return s;
}

Json stacker_to_json(const StackerConfig& s) {
    return {{"hidden_sizes", s.hidden_sizes}, {"mlp_hidden", s.mlp_hidden},   {"epochs", s.epochs},
            {"learning_rate", s.learning_rate}, {"beta1", s.beta1},           {"beta2", s.beta2},
            {"epsilon", s.epsilon}};
}

std::filesystem::path resolve(const std::string& p, const std::filesystem::path& base) {
    std::filesystem::path path(p);
    if (path.is_relative() && !base.empty()) path = base / path;
    return path.lexically_normal();
}

}  // namespace

GeneratorConfig generator_preset(const std::string& name) {
    if (name == "default") return default_generator_config();
    if (name == "interaction") {
        auto c = default_generator_config();
        c.signal_kind = SignalKind::interaction;
        for (auto& m : c.modality_specs)
            if (m.signal_fraction > 0.0) m.noise_scale *= 0.5;
        return c;
    }
    if (name == "planted") {
        GeneratorConfig c;
        c.n_samples = 300;
        c.time_point_count = 5;
        c.modality_specs = {{"signal", 6, 1.0 / 6.0, 0.3}, {"noise_a", 6, 0.0, 1.0}, {"noise_b", 6, 0.0, 1.0}};
        c.target_proportions = default_target_proportions();
        c.progression_drift = 0.3;
        c.rate_persistence = 0.8;
        c.seed = 3;
        return c;
    }
    throw ValidationError("generator.preset: unknown preset '" + name + "' (expected default, interaction or planted)");
}

GeneratorConfig generator_from_json(const Json& j, const std::string& where) {
    Fields f(j, where);
    auto c = generator_preset(f.get<std::string>("preset", "default"));
    c.n_samples = f.get("n_samples", c.n_samples);
    c.time_point_count = f.get("time_point_count", c.time_point_count);
    if (f.has("modalities")) {
        const auto& list = f.node("modalities");
        if (!list.is_array()) throw ValidationError(f.path("modalities") + ": expected an array");
        c.modality_specs.clear();
        for (std::size_t i = 0; i < list.size(); ++i) {
            Fields m(list[i], indexed(f.path("modalities"), i));
            ModalitySpec s;
            s.name = m.get<std::string>("name", "");
            s.feature_count = m.get("feature_count", s.feature_count);
            s.signal_fraction = m.get("signal_fraction", s.signal_fraction);
            s.noise_scale = m.get("noise_scale", s.noise_scale);
            m.finish();
            c.modality_specs.push_back(s);
        }
    } else {
        f.get<Json>("modalities", {});
    }
    c.class_count = f.get("class_count", c.class_count);
    c.class_names = f.get("class_names", c.class_names);
    c.time_point_names = f.get("time_point_names", c.time_point_names);
    c.target_proportions = f.get("target_proportions", c.target_proportions);
    c.progression_drift = f.get("progression_drift", c.progression_drift);
    c.rate_persistence = f.get("rate_persistence", c.rate_persistence);
    if (f.has("signal_kind")) c.signal_kind = signal_kind_from_string(f.get<std::string>("signal_kind", ""), f.path("signal_kind"));
    else f.get<Json>("signal_kind", {});
    c.missing_rate = f.get("missing_rate", c.missing_rate);
    if (f.has("categorical")) {
        const auto& list = f.node("categorical");
        if (!list.is_array()) throw ValidationError(f.path("categorical") + ": expected an array");
        c.categorical.clear();
        for (std::size_t i = 0; i < list.size(); ++i) {
            Fields m(list[i], indexed(f.path("categorical"), i));
            CategoricalSpec s;
            s.modality = m.get<std::string>("modality", "");
            s.feature_index = m.get("feature_index", s.feature_index);
            s.levels = m.get("levels", s.levels);
            s.name = m.get<std::string>("name", "");
            m.finish();
            c.categorical.push_back(s);
        }
    } else {
        f.get<Json>("categorical", {});
    }
    c.seed = f.get("seed", c.seed);
    f.finish();
    try {
        c.validate();
    } catch (const ValidationError& e) {
        throw ValidationError(where + "." + e.what());
    }
    return c;
}

Json to_json(const GeneratorConfig& c) {
    Json modalities = Json::array(), categorical = Json::array();
    for (const auto& m : c.modality_specs)
        modalities.push_back({{"name", m.name},
                              {"feature_count", m.feature_count},
                              {"signal_fraction", m.signal_fraction},
                              {"noise_scale", m.noise_scale}});
    for (const auto& s : c.categorical)
        categorical.push_back(
            {{"modality", s.modality}, {"feature_index", s.feature_index}, {"levels", s.levels}, {"name", s.name}});
    return {{"n_samples", c.n_samples},
            {"time_point_count", c.time_point_count},
            {"modalities", modalities},
            {"class_count", c.class_count},
            {"class_names", c.class_names},
            {"time_point_names", c.time_point_names},
            {"target_proportions", c.target_proportions},
            {"progression_drift", c.progression_drift},
            {"rate_persistence", c.rate_persistence},
            {"signal_kind", to_string(c.signal_kind)},
            {"missing_rate", c.missing_rate},
            {"categorical", categorical},
            {"seed", c.seed}};
}

PredictorSpec predictor_from_json(const Json& j, const std::string& where) {
    Fields f(j, where);
    const auto name = f.get<std::string>("algorithm", "");
    Algorithm a;
    try {
        a = algorithm_from_string(name);
    } catch (const ValidationError&) {
        throw ValidationError(f.path("algorithm") + ": unknown algorithm '" + name + "'");
    }
    PredictorSpec spec;
    spec.label = f.get<std::string>("label", "");
    spec.seed = f.get<std::uint64_t>("seed", 0);
    switch (a) {
        case Algorithm::knn: spec.params = KnnParams{f.get("k", KnnParams{}.k)}; break;
        case Algorithm::multinomial_logistic: spec.params = logistic_from(f); break;
        case Algorithm::random_forest: {
            ForestParams p;
            p.trees = f.get("trees", p.trees);
            p.max_depth = f.get("max_depth", p.max_depth);
            p.min_leaf = f.get("min_leaf", p.min_leaf);
            if (f.has("features_per_split"))
                p.features_per_split = split_from_string(f.get<std::string>("features_per_split", ""), f.path("features_per_split"));
            else
                f.get<Json>("features_per_split", {});
            p.bootstrap = f.get("bootstrap", p.bootstrap);
            spec.params = p;
            break;
        }
    }
    f.finish();
    try {
        spec.validate();
    } catch (const ValidationError& e) {
        throw ValidationError(where + ": " + e.what());
    }
    return spec;
}

Json to_json(const PredictorSpec& p) {
    Json j = {{"algorithm", to_string(p.algorithm())}, {"label", p.label}, {"seed", p.seed}};
    if (const auto* k = std::get_if<KnnParams>(&p.params)) j["k"] = k->k;
    if (const auto* l = std::get_if<LogisticParams>(&p.params)) j.update(to_json(*l));
    if (const auto* r = std::get_if<ForestParams>(&p.params)) {
        j["trees"] = r->trees;
        j["max_depth"] = r->max_depth;
        j["min_leaf"] = r->min_leaf;
        j["features_per_split"] = to_string(r->features_per_split);
        j["bootstrap"] = r->bootstrap;
    }
    return j;
}

RunConfig run_config_from_json(const Json& doc, const std::filesystem::path& base_dir) {
    const Json& j = doc.is_object() && doc.contains("config") && doc.contains("tool") ? doc.at("config") : doc;
    Fields f(j, "config");
    RunConfig c;
    c.experiment = default_experiment_config();
    c.interpret = default_interpret_config();

    if (!f.has("cohort")) throw ValidationError("config.cohort: required (generator or file + schema)");
    {
        Fields src(f.node("cohort"), "cohort");
        if (src.has("generator")) {
            c.cohort.generator = generator_from_json(src.node("generator"), "cohort.generator");
            if (src.has("file") || src.has("schema")) throw ValidationError("cohort: give either generator or file, not both");
        } else {
            src.get<Json>("generator", {});
            if (!src.has("file") || !src.has("schema")) throw ValidationError("cohort: file and schema are both required");
            c.cohort.file = resolve(src.get<std::string>("file", ""), base_dir);
            c.cohort.schema = resolve(src.get<std::string>("schema", ""), base_dir);
        }
        src.get<Json>("file", {});
        src.get<Json>("schema", {});
        src.finish();
    }

    if (f.has("preprocess")) {
        c.experiment.preprocess = preprocess_from_json(f.node("preprocess"), &c.one_hot_explicit);
    } else {
        f.get<Json>("preprocess", {});
    }
    c.interpret.preprocess = c.experiment.preprocess;
    if (f.has("predictors")) c.experiment.predictors = predictors_from_json(f.node("predictors"), "predictors");
    else f.get<Json>("predictors", {});
    c.interpret.predictors = c.experiment.predictors;
    if (f.has("stacker")) c.experiment.stacker = stacker_from_json(f.node("stacker"));
    else f.get<Json>("stacker", {});

    c.methods = {lei_configuration(4)};
    if (f.has("experiment")) {
        Fields e(f.node("experiment"), "experiment");
        auto& x = c.experiment;
        if (e.has("configurations")) {
            const auto names = e.get<std::vector<Json>>("configurations", {});
            c.methods.clear();
            for (std::size_t i = 0; i < names.size(); ++i) {
                const auto& n = names[i];
                std::string name = n.is_number_integer() ? std::to_string(n.get<int>()) : n.is_string() ? n.get<std::string>() : "";
                try {
                    c.methods.push_back(method_from_string(name));
                } catch (const ValidationError& err) {
                    throw ValidationError(indexed("experiment.configurations", i) + ": " + err.what());
                }
            }
            if (c.methods.empty()) throw ValidationError("experiment.configurations: list at least one configuration");
        } else {
            e.get<Json>("configurations", {});
        }
        x.loss = loss_kind_from_string(e.get<std::string>("loss", to_string(x.loss)));
        x.repeats = e.get("repeats", x.repeats);
        x.outer_folds = e.get("outer_folds", x.outer_folds);
        x.inner_folds = e.get("inner_folds", x.inner_folds);
        x.bp.inner_folds = x.inner_folds;
        x.bp.standardize_time_index = e.get("standardize_time_index", x.bp.standardize_time_index);
        x.seed = e.get("seed", x.seed);
        e.finish();
    } else {
        f.get<Json>("experiment", {});
    }

    if (f.has("interpret")) {
        Fields e(f.node("interpret"), "interpret");
        auto& x = c.interpret;
        x.inner_folds = e.get("inner_folds", x.inner_folds);
        x.permutation_repeats = e.get("permutation_repeats", x.permutation_repeats);
        x.top_k = e.get("top_k", x.top_k);
        x.seed = e.get("seed", x.seed);
        if (e.has("combiner")) {
            Fields cf(e.node("combiner"), "interpret.combiner");
            x.combiner = logistic_from(cf);
            cf.finish();
        } else {
            e.get<Json>("combiner", {});
        }
        e.finish();
    } else {
        f.get<Json>("interpret", {});
    }
    f.finish();
    c.experiment.validate();
    c.interpret.validate();
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config " + path.string());
    Json j;
    try {
        j = Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("config " + path.string() + ": " + e.what());
    }
    return run_config_from_json(j, std::filesystem::absolute(path).parent_path());
}

Json to_json(const RunConfig& c) {
    Json cohort;
    if (c.cohort.generator) cohort["generator"] = to_json(*c.cohort.generator);
    else cohort = {{"file", c.cohort.file.string()}, {"schema", c.cohort.schema.string()}};
    Json methods = Json::array();
    for (const auto& m : c.methods) methods.push_back(m.name);
    const auto& x = c.experiment;
    const auto& i = c.interpret;
    return {{"cohort", cohort},
            {"preprocess", to_json(x.preprocess)},
            {"predictors", to_json(x.predictors)},
            {"stacker", stacker_to_json(x.stacker)},
            {"experiment",
             {{"configurations", methods},
              {"loss", to_string(x.loss)},
              {"repeats", x.repeats},
              {"outer_folds", x.outer_folds},
              {"inner_folds", x.inner_folds},
              {"standardize_time_index", x.bp.standardize_time_index},
              {"seed", x.seed}}},
            {"interpret",
             {{"inner_folds", i.inner_folds},
              {"permutation_repeats", i.permutation_repeats},
              {"top_k", i.top_k},
              {"seed", i.seed},
              {"combiner", to_json(i.combiner)}}}};
}

LoadedCohort load_cohort_source(const CohortSource& source) {
    if (source.generator) {
        auto g = generate_with_latent(*source.generator);
        return {std::move(g.cohort), std::move(g.one_hot)};
    }
    auto schema = load_schema(source.schema);
    return {load_cohort(source.file, schema), schema.one_hot};
}

LoadedCohort resolve_cohort(RunConfig& config) {
    auto loaded = load_cohort_source(config.cohort);
    if (!config.one_hot_explicit) {
        config.experiment.preprocess.one_hot = loaded.one_hot;
        config.interpret.preprocess.one_hot = loaded.one_hot;
    }
    return loaded;
}

}  // namespace lei
