#include "lei/config.hpp"
#include "lei/errors.hpp"
#include "lei/losses.hpp"
#include "lei/metrics.hpp"
#include "lei/parallel.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cmath>
#include <limits>

namespace py = pybind11;
using namespace lei;

namespace {

RunConfig parse_config(const std::string& text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(std::string("config: ") + e.what());
    }
    return run_config_from_json(j);
}

const ModalityBlock& block_named(const LongitudinalCohort& c, const std::string& name) {
    int m = c.modality_index(name);
    if (m < 0) throw ValidationError("unknown modality '" + name + "'");
    return c.modalities()[static_cast<std::size_t>(m)];
}

// (samples, times, features) with NaN for missing cells.
py::array_t<double> block_array(const ModalityBlock& b) {
    py::array_t<double> out({b.samples(), b.times(), b.features()});
    auto v = out.mutable_unchecked<3>();
    for (std::size_t s = 0; s < b.samples(); ++s)
        for (std::size_t t = 0; t < b.times(); ++t)
            for (std::size_t f = 0; f < b.features(); ++f)
                v(s, t, f) = b.observed(s, t, f) ? b.value(s, t, f) : std::numeric_limits<double>::quiet_NaN();
    return out;
}

py::dict report_dict(const MetricsReport& r) {
    py::dict methods;
    for (const auto& m : r.methods) {
        const auto R = static_cast<Eigen::Index>(m.macro_f.size());
        const auto T = static_cast<Eigen::Index>(r.time_points.size());
        Eigen::MatrixXd f(R, T);
        for (Eigen::Index i = 0; i < R; ++i)
            for (Eigen::Index t = 0; t < T; ++t) f(i, t) = m.macro_f[static_cast<std::size_t>(i)][static_cast<std::size_t>(t)];
        py::dict d;
        d["macro_f"] = f;
        d["median"] = m.median;
        d["standard_error"] = m.standard_error;
        methods[py::str(m.method)] = d;
    }
    py::dict audit;
    audit["units"] = r.audit.units;
    audit["inner_violations"] = r.audit.inner_violations;
    audit["outer_violations"] = r.audit.outer_violations;
    audit["time_dependent_models"] = r.audit.time_dependent_models;
    audit["time_distributed_models"] = r.audit.time_distributed_models;
    audit["unseen_categories"] = r.audit.unseen_categories;
    audit["warnings"] = r.audit.warnings;
    py::dict out;
    out["time_points"] = r.time_points;
    out["class_names"] = r.class_names;
    out["methods"] = methods;
    out["audit"] = audit;
    return out;
}

py::dict table_dict(const ImportanceTable& table) {
    py::list times;
    for (const auto& r : table.times) {
        py::list features;
        for (const auto& f : r.features) {
            py::dict d;
            d["modality"] = f.modality;
            d["feature"] = f.feature;
            d["rank"] = f.rank;
            d["score"] = f.score;
            d["modality_rank"] = f.modality_rank;
            d["feature_mean_rank"] = f.feature_mean_rank;
            d["importance"] = f.importance;
            d["importance_sd"] = f.importance_sd;
            features.append(d);
        }
        py::list modalities;
        for (const auto& m : r.modalities) {
            py::dict d;
            d["modality"] = m.modality;
            d["rank"] = m.rank;
            d["importance"] = m.importance;
            modalities.append(d);
        }
        py::dict d;
        d["time_point"] = r.time_point;
        d["target_time_point"] = r.target_time_point;
        d["baseline_macro_f"] = r.baseline_macro_f;
        d["modalities"] = modalities;
        d["features"] = features;
        times.append(d);
    }
    py::list links;
    for (const auto& l : table.links) links.append(py::make_tuple(l.modality, l.feature, l.from, l.to));
    py::dict out;
    out["top_k"] = table.top_k;
    out["times"] = times;
    out["links"] = links;
    return out;
}

std::vector<Method> methods_from(const std::vector<std::string>& names) {
    std::vector<Method> out;
    for (const auto& n : names) out.push_back(method_from_string(n));
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Longitudinal stacking of per-modality base predictors.";

    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);

    py::class_<LongitudinalCohort>(m, "Cohort")
        .def_property_readonly("sample_ids", &LongitudinalCohort::sample_ids)
        .def_property_readonly("time_points", &LongitudinalCohort::time_point_names)
        .def_property_readonly("target_time_point", &LongitudinalCohort::target_time_point)
        .def_property_readonly("class_names", [](const LongitudinalCohort& c) { return c.labels().class_names; })
        .def_property_readonly("modalities",
                               [](const LongitudinalCohort& c) {
                                   std::vector<std::string> names;
                                   for (const auto& b : c.modalities()) names.push_back(b.name());
                                   return names;
                               })
        .def_property_readonly("total_features", &LongitudinalCohort::total_features)
        .def("feature_names", [](const LongitudinalCohort& c, const std::string& modality) {
            return block_named(c, modality).feature_names();
        })
        .def("features", [](const LongitudinalCohort& c, const std::string& modality) {
            return block_array(block_named(c, modality));
        }, "Array of shape (samples, times, features); NaN marks missing cells.")
        .def("labels", [](const LongitudinalCohort& c) { return c.labels().labels; },
             "Ordinal labels, samples x (input times + target).")
        .def("class_distribution", [](const LongitudinalCohort& c) { return class_distribution(c); })
        .def("subset", [](const LongitudinalCohort& c, const std::vector<std::string>& ids) {
            return subset_by_samples(c, ids);
        })
        .def("__len__", &LongitudinalCohort::samples)
        .def("__eq__", [](const LongitudinalCohort& a, const LongitudinalCohort& b) { return a == b; });

    m.def("generator_preset", [](const std::string& name) { return to_json(generator_preset(name)).dump(); },
          "Generator preset as a JSON string.");
    m.def("generate", [](const std::string& generator_json) {
        return generate(generator_from_json(Json::parse(generator_json)));
    }, py::arg("generator_json"));
    m.def("load_cohort", [](const std::filesystem::path& file, const std::filesystem::path& schema) {
        return load_cohort(file, load_schema(schema));
    }, py::arg("file"), py::arg("schema"));
    m.def("export_cohort", [](const LongitudinalCohort& c, const std::filesystem::path& file,
                              const std::filesystem::path& schema) {
        export_cohort(c, file);
        save_schema(schema_of(c), schema);
    }, py::arg("cohort"), py::arg("file"), py::arg("schema"));

    m.def("resolve_config", [](const std::string& text) { return to_json(parse_config(text)).dump(); },
          py::arg("config_json"), "Validated config with every default filled in.");
    m.def("load_config_cohort", [](const std::string& text) {
        auto cfg = parse_config(text);
        return resolve_cohort(cfg).cohort;
    }, py::arg("config_json"));
    m.def("run_methods", [](const std::string& text, const std::vector<std::string>& names) {
        auto cfg = parse_config(text);
        auto methods = names.empty() ? cfg.methods : methods_from(names);
        auto loaded = resolve_cohort(cfg);
        MetricsReport report;
        {
            py::gil_scoped_release release;
            report = run_methods(loaded.cohort, cfg.experiment, methods);
        }
        return report_dict(report);
    }, py::arg("config_json"), py::arg("methods") = std::vector<std::string>{});
    m.def("interpret", [](const std::string& text) {
        auto cfg = parse_config(text);
        auto loaded = resolve_cohort(cfg);
        ImportanceTable table;
        {
            py::gil_scoped_release release;
            table = interpret_cohort(loaded.cohort, cfg.interpret);
        }
        return table_dict(table);
    }, py::arg("config_json"));

    m.def("macro_f_measure", [](const std::vector<int>& predicted, const std::vector<int>& truth, int classes) {
        if (predicted.size() != truth.size()) throw ValidationError("predicted and truth differ in length");
        return macro_f_measure(predicted, truth, classes);
    }, py::arg("predicted"), py::arg("truth"), py::arg("class_count"));
    m.def("class_weights", &class_weights, py::arg("labels"), py::arg("class_count"));
    m.def("loss", [](const std::string& kind, const std::vector<Eigen::MatrixXd>& probabilities,
                     const Eigen::MatrixXi& labels, std::optional<Eigen::MatrixXd> weights) {
        LossSpec spec;
        spec.kind = loss_kind_from_string(kind);
        spec.class_count = probabilities.empty() ? 0 : static_cast<int>(probabilities[0].cols());
        spec.class_weights = weights ? *weights : Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(probabilities.size()), spec.class_count);
        return loss(spec, probabilities, labels);
    }, py::arg("kind"), py::arg("probabilities"), py::arg("labels"), py::arg("class_weights") = py::none(),
       "Mean over samples of the time-summed loss; one probability matrix per step.");

    m.def("set_threads", &set_thread_count, py::arg("n"));
    m.def("threads", &thread_count);
}
