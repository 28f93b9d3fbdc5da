#include "lei/losses.hpp"

#include "lei/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

namespace lei {

std::string to_string(LossKind k) {
    switch (k) {
        case LossKind::cce: return "cce";
        case LossKind::weighted_cce: return "weighted_cce";
        case LossKind::dwcce: return "dwcce";
    }
    return "?";
}

LossKind loss_kind_from_string(const std::string& name) {
    if (name == "cce") return LossKind::cce;
    if (name == "weighted_cce") return LossKind::weighted_cce;
    if (name == "dwcce") return LossKind::dwcce;
    throw ValidationError("unknown loss kind '" + name + "' (expected cce, weighted_cce or dwcce)");
}

void LossSpec::validate(std::size_t steps) const {
    if (class_count < 2) throw ValidationError("loss: class_count must be at least 2");
    if (kind == LossKind::cce) return;
    if (class_weights.size() == 0) throw ValidationError("loss: " + to_string(kind) + " requires class weights");
    if (class_weights.rows() != static_cast<Eigen::Index>(steps) || class_weights.cols() != class_count)
        throw ValidationError("loss: class weights must be steps x classes");
    if (!class_weights.allFinite() || (class_weights.array() < 0.0).any())
        throw ValidationError("loss: class weights must be finite and non-negative");
}

Eigen::MatrixXd class_weights(const Eigen::MatrixXi& labels, int class_count) {
    if (class_count < 1) throw ValidationError("class_weights: class_count must be positive");
    const auto n = static_cast<double>(labels.rows());
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(labels.cols(), class_count);
    for (Eigen::Index t = 0; t < labels.cols(); ++t) {
        Eigen::VectorXd counts = Eigen::VectorXd::Zero(class_count);
        for (Eigen::Index s = 0; s < labels.rows(); ++s) {
            const int y = labels(s, t);
            if (y < 0 || y >= class_count) throw ValidationError("class_weights: label out of range");
            counts(y) += 1.0;
        }
        for (int c = 0; c < class_count; ++c)
            if (counts(c) > 0) w(t, c) = n / (class_count * counts(c));
    }
    return w;
}

double ordinal_weight(const Eigen::Ref<const Eigen::RowVectorXd>& probabilities, int label, int class_count) {
    if (class_count < 2) throw ValidationError("ordinal_weight: class_count must be at least 2");
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < probabilities.size(); ++c)
        if (probabilities(c) > probabilities(best)) best = c;
    return static_cast<double>(std::abs(static_cast<int>(best) - label)) / (class_count - 1) + 1.0;
}

double example_weight(const LossSpec& spec, const Eigen::Ref<const Eigen::RowVectorXd>& probabilities, int label,
                      std::size_t step) {
    double w = 1.0;
    if (spec.kind != LossKind::cce) w *= spec.class_weights(static_cast<Eigen::Index>(step), label);
    if (spec.kind == LossKind::dwcce) w *= ordinal_weight(probabilities, label, spec.class_count);
    return w;
}

namespace {

void check(const LossSpec& spec, const StepProbabilities& p, const Eigen::MatrixXi& y) {
    spec.validate(p.size());
    if (y.cols() != static_cast<Eigen::Index>(p.size())) throw ValidationError("loss: label steps differ from prediction steps");
    for (const auto& step : p) {
        if (step.rows() != y.rows() || step.cols() != spec.class_count)
            throw ValidationError("loss: prediction shape does not match labels");
        if (!step.allFinite()) throw NumericError("loss: non-finite prediction");
    }
    if ((y.array() < 0).any() || (y.array() >= spec.class_count).any()) throw ValidationError("loss: label out of range");
}

}  // namespace

double loss(const LossSpec& spec, const StepProbabilities& p, const Eigen::MatrixXi& y) {
    check(spec, p, y);
    if (y.rows() == 0) return 0.0;
    double total = 0.0;
    for (Eigen::Index s = 0; s < y.rows(); ++s)
        for (std::size_t t = 0; t < p.size(); ++t) {
            const int label = y(s, static_cast<Eigen::Index>(t));
            const double w = example_weight(spec, p[t].row(s), label, t);
            if (w != 0.0) total -= w * std::log(std::max(p[t](s, label), kLogFloor));
        }
    return total / static_cast<double>(y.rows());
}

StepProbabilities loss_grad(const LossSpec& spec, const StepProbabilities& p, const Eigen::MatrixXi& y) {
    check(spec, p, y);
    StepProbabilities g;
    for (const auto& step : p) g.push_back(Eigen::MatrixXd::Zero(step.rows(), step.cols()));
    if (y.rows() == 0) return g;
    const double inv_n = 1.0 / static_cast<double>(y.rows());
    for (Eigen::Index s = 0; s < y.rows(); ++s)
        for (std::size_t t = 0; t < p.size(); ++t) {
            const int label = y(s, static_cast<Eigen::Index>(t));
            const double w = example_weight(spec, p[t].row(s), label, t);
            const double q = p[t](s, label);
            if (w != 0.0 && q > kLogFloor) g[t](s, label) = -w * inv_n / q;
        }
    return g;
}

}  // namespace lei
