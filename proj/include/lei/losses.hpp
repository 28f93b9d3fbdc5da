#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace lei {

enum class LossKind { cce, weighted_cce, dwcce };

std::string to_string(LossKind k);
LossKind loss_kind_from_string(const std::string& name);

/// Predictions are one samples x classes matrix per step; labels are samples x steps.
using StepProbabilities = std::vector<Eigen::MatrixXd>;

struct LossSpec {
    LossKind kind = LossKind::cce;
    /// steps x classes; required for weighted_cce and dwcce.
    Eigen::MatrixXd class_weights;
    int class_count = 0;

    /// Throws ValidationError on a malformed spec.
    void validate(std::size_t steps) const;
};

/// w = N / (C * n) per step and class; zero where the class is absent.
Eigen::MatrixXd class_weights(const Eigen::MatrixXi& labels, int class_count);

/// |argmax - y| / (C - 1) + 1, argmax ties to the lower class.
double ordinal_weight(const Eigen::Ref<const Eigen::RowVectorXd>& probabilities, int label, int class_count);

/// Mean over samples of the time-summed weighted cross-entropy.
double loss(const LossSpec& spec, const StepProbabilities& predictions, const Eigen::MatrixXi& labels);

/// d loss / d predictions, with the ordinal weight held constant.
StepProbabilities loss_grad(const LossSpec& spec, const StepProbabilities& predictions, const Eigen::MatrixXi& labels);

/// Combined weight w_o * w_c for one sample and step.
double example_weight(const LossSpec& spec, const Eigen::Ref<const Eigen::RowVectorXd>& probabilities, int label,
                      std::size_t step);

inline constexpr double kLogFloor = 1e-12;

}  // namespace lei
