#include "lei/cohort.hpp"

#include "lei/errors.hpp"
#include "lei/text_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace lei {

MaskedMatrix::MaskedMatrix(Eigen::Index rows, Eigen::Index cols)
    : values(Eigen::MatrixXd::Zero(rows, cols)),
      observed(Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(rows, cols, false)) {}

MaskedMatrix::MaskedMatrix(Eigen::MatrixXd fully_observed)
    : values(std::move(fully_observed)),
      observed(Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(values.rows(), values.cols(), true)) {}

ModalityBlock::ModalityBlock(std::string name, std::vector<std::string> feature_names, std::size_t samples,
                             std::size_t times)
    : name_(std::move(name)),
      feature_names_(std::move(feature_names)),
      samples_(samples),
      times_(times),
      values_(samples * times * feature_names_.size(), 0.0),
      observed_(samples * times * feature_names_.size(), 0) {}

MaskedMatrix ModalityBlock::slice(std::size_t t) const {
    MaskedMatrix m(static_cast<Eigen::Index>(samples_), static_cast<Eigen::Index>(features()));
    for (std::size_t s = 0; s < samples_; ++s) {
        for (std::size_t f = 0; f < features(); ++f) {
            auto i = index(s, t, f);
            m.values(s, f) = values_[i];
            m.observed(s, f) = observed_[i] != 0;
        }
    }
    return m;
}

void ModalityBlock::assign_slice(std::size_t t, const MaskedMatrix& m) {
    if (static_cast<std::size_t>(m.rows()) != samples_ || static_cast<std::size_t>(m.cols()) != features())
        throw ValidationError("assign_slice: extent mismatch for modality '" + name_ + "'");
    for (std::size_t s = 0; s < samples_; ++s) {
        for (std::size_t f = 0; f < features(); ++f) {
            if (m.observed(s, f))
                set(s, t, f, m.values(s, f));
            else
                set_missing(s, t, f);
        }
    }
}

std::size_t ModalityBlock::missing_count() const {
    return static_cast<std::size_t>(std::count(observed_.begin(), observed_.end(), 0));
}

LongitudinalCohort::LongitudinalCohort(std::vector<std::string> sample_ids, std::vector<std::string> time_point_names,
                                       std::string target_time_point, std::vector<ModalityBlock> modalities,
                                       LabelSequence labels, bool monotone_progression)
    : sample_ids_(std::move(sample_ids)),
      time_point_names_(std::move(time_point_names)),
      target_time_point_(std::move(target_time_point)),
      modalities_(std::move(modalities)),
      labels_(std::move(labels)),
      monotone_(monotone_progression) {
    std::unordered_set<std::string> seen;
    for (const auto& id : sample_ids_)
        if (!seen.insert(id).second) throw ValidationError("duplicate sample id '" + id + "'");

    std::unordered_set<std::string> names;
    for (const auto& m : modalities_) {
        if (!names.insert(m.name()).second) throw ValidationError("duplicate modality '" + m.name() + "'");
        if (m.samples() != samples() || m.times() != times())
            throw ValidationError("modality '" + m.name() + "' extents do not match the cohort");
    }

    if (labels_.class_count < 1 || labels_.class_names.size() != static_cast<std::size_t>(labels_.class_count))
        throw ValidationError("class_names must have one entry per class");
    if (static_cast<std::size_t>(labels_.labels.rows()) != samples() ||
        static_cast<std::size_t>(labels_.labels.cols()) != times() + 1)
        throw ValidationError("labels must cover every sample at every input time point plus the target");
    if (labels_.labels.size() > 0 &&
        (labels_.labels.minCoeff() < 0 || labels_.labels.maxCoeff() >= labels_.class_count))
        throw ValidationError("label outside [0, C-1]");
    if (monotone_) {
        for (Eigen::Index s = 0; s < labels_.labels.rows(); ++s)
            for (Eigen::Index t = 1; t < labels_.labels.cols(); ++t)
                if (labels_.labels(s, t) < labels_.labels(s, t - 1))
                    throw ValidationError("labels of sample '" + sample_ids_[s] + "' decrease over time");
    }
}

std::vector<std::string> LongitudinalCohort::label_time_names() const {
    auto names = time_point_names_;
    names.push_back(target_time_point_);
    return names;
}

std::size_t LongitudinalCohort::total_features() const {
    std::size_t n = 0;
    for (const auto& m : modalities_) n += m.features();
    return n;
}

std::vector<int> LongitudinalCohort::labels_at(std::size_t t) const {
    std::vector<int> out(samples());
    for (std::size_t s = 0; s < samples(); ++s) out[s] = labels_.labels(s, t);
    return out;
}

int LongitudinalCohort::modality_index(const std::string& name) const {
    for (std::size_t i = 0; i < modalities_.size(); ++i)
        if (modalities_[i].name() == name) return static_cast<int>(i);
    return -1;
}

// ---------------------------------------------------------------- schema

CohortSchema load_schema(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open schema file " + path.string());
    nlohmann::json j;
    try {
        in >> j;
        CohortSchema schema;
        schema.class_names = j.at("class_names").get<std::vector<std::string>>();
        schema.time_points = j.at("time_points").get<std::vector<std::string>>();
        schema.target_time_point = j.at("target_time_point").get<std::string>();
        for (const auto& m : j.at("modalities"))
            schema.modalities.push_back({m.at("name").get<std::string>(), m.at("features").get<std::vector<std::string>>()});
        if (j.contains("one_hot"))
            for (const auto& d : j.at("one_hot"))
                schema.one_hot.push_back({d.at("modality").get<std::string>(), d.at("feature").get<std::string>()});
        schema.monotone_progression = j.value("monotone_progression", true);
        return schema;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("schema " + path.string() + ": " + e.what());
    }
}

void save_schema(const CohortSchema& schema, const std::filesystem::path& path) {
    nlohmann::ordered_json j;
    j["class_names"] = schema.class_names;
    j["time_points"] = schema.time_points;
    j["target_time_point"] = schema.target_time_point;
    j["modalities"] = nlohmann::ordered_json::array();
    for (const auto& m : schema.modalities) j["modalities"].push_back({{"name", m.name}, {"features", m.features}});
    j["one_hot"] = nlohmann::ordered_json::array();
    for (const auto& d : schema.one_hot) j["one_hot"].push_back({{"modality", d.modality}, {"feature", d.feature}});
    j["monotone_progression"] = schema.monotone_progression;
    std::ofstream out(path);
    if (!out) throw IoError("cannot write schema file " + path.string());
    out << j.dump(2) << '\n';
}

CohortSchema schema_of(const LongitudinalCohort& cohort, std::vector<OneHotDesignation> one_hot) {
    CohortSchema schema;
    schema.class_names = cohort.labels().class_names;
    schema.time_points = cohort.time_point_names();
    schema.target_time_point = cohort.target_time_point();
    for (const auto& m : cohort.modalities()) schema.modalities.push_back({m.name(), m.feature_names()});
    schema.one_hot = std::move(one_hot);
    schema.monotone_progression = cohort.monotone_progression();
    return schema;
}

// ---------------------------------------------------------------- file I/O

LongitudinalCohort load_cohort(const std::filesystem::path& path, const CohortSchema& schema) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open cohort file " + path.string());

    const std::size_t T = schema.time_points.size();
    if (T == 0) throw ValidationError("schema declares no time points");
    std::unordered_map<std::string, std::size_t> time_index;
    for (std::size_t t = 0; t < T; ++t) time_index[schema.time_points[t]] = t;
    time_index[schema.target_time_point] = T;
    std::unordered_map<std::string, int> class_index;
    for (std::size_t c = 0; c < schema.class_names.size(); ++c) class_index[schema.class_names[c]] = static_cast<int>(c);

    // feature name -> (modality, position)
    std::unordered_map<std::string, std::pair<std::size_t, std::size_t>> owner;
    for (std::size_t m = 0; m < schema.modalities.size(); ++m)
        for (std::size_t f = 0; f < schema.modalities[m].features.size(); ++f)
            if (!owner.emplace(schema.modalities[m].features[f], std::make_pair(m, f)).second)
                throw ValidationError("feature '" + schema.modalities[m].features[f] + "' assigned to two modalities");

    std::string line;
    if (!std::getline(in, line)) throw ValidationError("cohort file is empty");
    auto header = text::split(text::trim(line));
    if (header.size() < 3 || text::trim(header.front()) != "sample_id" || text::trim(header[1]) != "time_point" ||
        text::trim(header.back()) != "label")
        throw ValidationError("header must be sample_id,time_point,<features...>,label");

    std::vector<std::pair<std::size_t, std::size_t>> column_owner;
    std::set<std::string> covered;
    for (std::size_t c = 2; c + 1 < header.size(); ++c) {
        std::string name(text::trim(header[c]));
        auto it = owner.find(name);
        if (it == owner.end()) throw ValidationError("feature column '" + name + "' not covered by schema");
        if (!covered.insert(name).second) throw ValidationError("duplicate feature column '" + name + "'");
        column_owner.push_back(it->second);
    }

    struct Row {
        std::size_t time;
        std::vector<std::optional<double>> cells;
        std::optional<int> label;
    };
    std::vector<std::string> ids;
    std::unordered_map<std::string, std::size_t> id_pos;
    std::vector<std::map<std::size_t, Row>> rows_by_sample;

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        auto trimmed = text::trim(line);
        if (trimmed.empty()) continue;
        auto fields = text::split(trimmed);
        if (fields.size() != header.size())
            throw ValidationError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                                  " fields, found " + std::to_string(fields.size()));
        std::string id(text::trim(fields[0]));
        std::string tp(text::trim(fields[1]));
        auto tit = time_index.find(tp);
        if (tit == time_index.end())
            throw ValidationError("line " + std::to_string(line_no) + ": unknown time point '" + tp + "'");

        auto [pit, inserted] = id_pos.emplace(id, ids.size());
        if (inserted) {
            ids.push_back(id);
            rows_by_sample.emplace_back();
        }
        auto& sample_rows = rows_by_sample[pit->second];
        if (sample_rows.count(tit->second))
            throw ValidationError("line " + std::to_string(line_no) + ": duplicate row (" + id + ", " + tp + ")");

        Row row{tit->second, {}, std::nullopt};
        row.cells.reserve(column_owner.size());
        for (std::size_t c = 2; c + 1 < fields.size(); ++c) {
            auto cell = text::trim(fields[c]);
            if (cell.empty()) {
                row.cells.emplace_back(std::nullopt);
                continue;
            }
            double v = 0.0;
            if (!text::parse_double(cell, v))
                throw ValidationError("line " + std::to_string(line_no) + ": non-numeric value '" + std::string(cell) + "'");
            row.cells.emplace_back(v);
        }
        auto label = std::string(text::trim(fields.back()));
        if (!label.empty()) {
            auto cit = class_index.find(label);
            if (cit == class_index.end())
                throw ValidationError("line " + std::to_string(line_no) + ": label '" + label + "' outside declared class set");
            row.label = cit->second;
        }
        sample_rows.emplace(tit->second, std::move(row));
    }

    const std::size_t N = ids.size();
    std::vector<ModalityBlock> blocks;
    for (const auto& m : schema.modalities) blocks.emplace_back(m.name, m.features, N, T);

    LabelSequence labels;
    labels.class_count = static_cast<int>(schema.class_names.size());
    labels.class_names = schema.class_names;
    labels.labels = Eigen::MatrixXi::Constant(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(T + 1), -1);

    for (std::size_t s = 0; s < N; ++s) {
        for (const auto& [t, row] : rows_by_sample[s]) {
            if (row.label) labels.labels(s, t) = *row.label;
            if (t == T) continue;  // target-only row carries no features
            for (std::size_t c = 0; c < column_owner.size(); ++c)
                if (row.cells[c]) blocks[column_owner[c].first].set(s, t, column_owner[c].second, *row.cells[c]);
        }
        // Fill absent labels: forward from the last known, then backward at the start.
        int last = -1;
        for (std::size_t t = 0; t <= T; ++t) {
            if (labels.labels(s, t) >= 0)
                last = labels.labels(s, t);
            else if (last >= 0)
                labels.labels(s, t) = last;
        }
        if (last < 0) throw ValidationError("sample '" + ids[s] + "' has no label at any time point");
        for (std::size_t t = T + 1; t-- > 0;) {
            if (labels.labels(s, t) >= 0)
                last = labels.labels(s, t);
            else
                labels.labels(s, t) = last;
        }
    }

    return {std::move(ids), schema.time_points, schema.target_time_point, std::move(blocks), std::move(labels),
            schema.monotone_progression};
}

void export_cohort(const LongitudinalCohort& cohort, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write cohort file " + path.string());

    out << "sample_id,time_point";
    for (const auto& m : cohort.modalities())
        for (const auto& f : m.feature_names()) out << ',' << f;
    out << ",label\n";

    const auto names = cohort.label_time_names();
    const auto T = cohort.times();
    for (std::size_t s = 0; s < cohort.samples(); ++s) {
        for (std::size_t t = 0; t <= T; ++t) {
            out << cohort.sample_ids()[s] << ',' << names[t];
            for (const auto& m : cohort.modalities()) {
                for (std::size_t f = 0; f < m.features(); ++f) {
                    out << ',';
                    if (t < T && m.observed(s, t, f)) out << text::format_double(m.value(s, t, f));
                }
            }
            out << ',' << cohort.labels().class_names[cohort.labels().labels(s, t)] << '\n';
        }
    }
    if (!out) throw IoError("write failed for " + path.string());
}

Eigen::MatrixXi class_distribution(const LongitudinalCohort& cohort) {
    const auto& L = cohort.labels().labels;
    Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(L.cols(), cohort.class_count());
    for (Eigen::Index s = 0; s < L.rows(); ++s)
        for (Eigen::Index t = 0; t < L.cols(); ++t) ++counts(t, L(s, t));
    return counts;
}

LongitudinalCohort subset_by_indices(const LongitudinalCohort& cohort, const std::vector<std::size_t>& rows) {
    const auto T = cohort.times();
    std::vector<std::string> ids;
    ids.reserve(rows.size());
    for (auto r : rows) {
        if (r >= cohort.samples()) throw ValidationError("subset row index out of range");
        ids.push_back(cohort.sample_ids()[r]);
    }

    std::vector<ModalityBlock> blocks;
    for (const auto& m : cohort.modalities()) {
        ModalityBlock b(m.name(), m.feature_names(), rows.size(), T);
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (std::size_t t = 0; t < T; ++t)
                for (std::size_t f = 0; f < m.features(); ++f)
                    if (m.observed(rows[i], t, f)) b.set(i, t, f, m.value(rows[i], t, f));
        blocks.push_back(std::move(b));
    }

    LabelSequence labels;
    labels.class_count = cohort.class_count();
    labels.class_names = cohort.labels().class_names;
    labels.labels.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(T + 1));
    for (std::size_t i = 0; i < rows.size(); ++i) labels.labels.row(i) = cohort.labels().labels.row(rows[i]);

    return {std::move(ids), cohort.time_point_names(), cohort.target_time_point(), std::move(blocks),
            std::move(labels), cohort.monotone_progression()};
}

LongitudinalCohort subset_by_samples(const LongitudinalCohort& cohort, const std::vector<std::string>& ids) {
    std::unordered_map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < cohort.samples(); ++i) pos.emplace(cohort.sample_ids()[i], i);
    std::vector<bool> keep(cohort.samples(), false);
    for (const auto& id : ids) {
        auto it = pos.find(id);
        if (it == pos.end()) throw ValidationError("unknown sample id '" + id + "'");
        keep[it->second] = true;
    }
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < keep.size(); ++i)
        if (keep[i]) rows.push_back(i);
    return subset_by_indices(cohort, rows);
}

}  // namespace lei
