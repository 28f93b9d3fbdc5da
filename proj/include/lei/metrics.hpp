#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace lei {

/// Rows are true classes, columns predicted classes.
Eigen::MatrixXi confusion_matrix(std::span<const int> predicted, std::span<const int> truth, int class_count);

/// F1 per class, 0 where precision + recall is 0.
std::vector<double> per_class_f(const Eigen::MatrixXi& confusion);

/// Unweighted mean of per-class F1 over all classes.
double macro_f_measure(std::span<const int> predicted, std::span<const int> truth, int class_count);

double median(std::vector<double> values);
/// Sample standard deviation divided by sqrt(n); 0 for fewer than two values.
double standard_error(std::span<const double> values);

}  // namespace lei
