#include "lei/metrics.hpp"

#include "lei/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lei {

Eigen::MatrixXi confusion_matrix(std::span<const int> predicted, std::span<const int> truth, int class_count) {
    if (predicted.size() != truth.size()) throw ValidationError("prediction and truth lengths differ");
    if (predicted.empty()) throw ValidationError("cannot score empty label vectors");
    if (class_count < 1) throw ValidationError("class_count must be positive");
    Eigen::MatrixXi m = Eigen::MatrixXi::Zero(class_count, class_count);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 0 || truth[i] >= class_count || predicted[i] < 0 || predicted[i] >= class_count)
            throw ValidationError("label out of range");
        ++m(truth[i], predicted[i]);
    }
    return m;
}

std::vector<double> per_class_f(const Eigen::MatrixXi& confusion) {
    std::vector<double> f(static_cast<std::size_t>(confusion.rows()), 0.0);
    for (Eigen::Index c = 0; c < confusion.rows(); ++c) {
        const double tp = confusion(c, c);
        const double predicted = confusion.col(c).sum(), actual = confusion.row(c).sum();
        if (tp == 0.0) continue;
        f[c] = 2.0 * tp / (predicted + actual);
    }
    return f;
}

double macro_f_measure(std::span<const int> predicted, std::span<const int> truth, int class_count) {
    auto f = per_class_f(confusion_matrix(predicted, truth, class_count));
    return std::accumulate(f.begin(), f.end(), 0.0) / static_cast<double>(class_count);
}

double median(std::vector<double> values) {
    if (values.empty()) throw ValidationError("median of an empty set");
    std::sort(values.begin(), values.end());
    const auto n = values.size();
    return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double standard_error(std::span<const double> values) {
    const auto n = values.size();
    if (n < 2) return 0.0;
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n);
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return std::sqrt(ss / static_cast<double>(n - 1)) / std::sqrt(static_cast<double>(n));
}

}  // namespace lei
