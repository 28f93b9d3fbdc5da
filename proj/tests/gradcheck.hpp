#pragma once

#include "lei/losses.hpp"
#include "lei/random.hpp"
#include "lei/stacker.hpp"

#include <algorithm>
#include <cmath>

namespace lei::testing {

struct GradInstance {
    StackerConfig config;
    Sequence inputs;
    Eigen::MatrixXi targets;
    LossSpec loss;
};

inline GradInstance random_instance(std::uint64_t seed, HeadKind head, LossKind kind, int samples = 3, int steps = 4,
                                    int width = 8, std::vector<int> hidden = {5, 3}) {
    Rng rng(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.2, 2.0);
    const int C = 3;
    GradInstance g;
    g.config.input_width = width;
    g.config.class_count = C;
    g.config.head = head;
    g.config.hidden_sizes = std::move(hidden);
    if (head == HeadKind::longitudinal_softmax) g.config.hidden_sizes.back() = C;
    g.config.mlp_hidden = 4;
    g.config.time_steps = steps;
    g.config.seed = seed;
    for (int t = 0; t < steps; ++t) {
        Eigen::MatrixXd x(samples, width);
        for (Eigen::Index k = 0; k < x.size(); ++k) x(k) = z(rng);
        g.inputs.push_back(x);
    }
    g.targets.resize(samples, steps);
    std::uniform_int_distribution<int> cls(0, C - 1);
    for (Eigen::Index k = 0; k < g.targets.size(); ++k) g.targets(k) = cls(rng);
    g.loss.kind = kind;
    g.loss.class_count = C;
    if (kind != LossKind::cce) {
        g.loss.class_weights.resize(steps, C);
        for (Eigen::Index k = 0; k < g.loss.class_weights.size(); ++k) g.loss.class_weights(k) = u(rng);
    }
    return g;
}

/// Loss with every ordinal weight frozen at the values implied by `reference`.
inline double frozen_loss(const StackerModel& model, const GradInstance& g, const Sequence& reference) {
    auto p = forward(model, g.inputs);
    double total = 0.0;
    for (Eigen::Index s = 0; s < g.targets.rows(); ++s)
        for (std::size_t t = 0; t < p.size(); ++t) {
            const int y = g.targets(s, static_cast<Eigen::Index>(t));
            const double w = example_weight(g.loss, reference[t].row(s), y, t);
            total -= w * std::log(std::max(p[t](s, y), kLogFloor));
        }
    return total / static_cast<double>(g.targets.rows());
}

/// Largest relative error between the analytic gradient and a five-point
/// central difference, with differences below `floor` compared absolutely.
inline double max_relative_error(const StackerModel& model, const GradInstance& g, double h = 1e-3,
                                 double floor = 1e-6) {
    const auto analytic = backward(model, g.inputs, g.targets, g.loss).gradient;
    const auto reference = forward(model, g.inputs);
    double worst = 0.0;
    StackerModel probe = model;
    for (Eigen::Index k = 0; k < model.params.size(); ++k) {
        auto at = [&](double d) {
            probe.params(k) = model.params(k) + d;
            return frozen_loss(probe, g, reference);
        };
        const double numeric = (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h);
        probe.params(k) = model.params(k);
        const double a = analytic(k);
        const double denom = std::max({std::abs(a), std::abs(numeric), floor});
        worst = std::max(worst, std::abs(a - numeric) / denom);
    }
    return worst;
}

}  // namespace lei::testing
