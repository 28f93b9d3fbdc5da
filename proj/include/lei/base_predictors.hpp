#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace lei {

enum class Algorithm { knn, multinomial_logistic, random_forest };

std::string to_string(Algorithm a);
Algorithm algorithm_from_string(const std::string& name);

struct KnnParams {
    int k = 15;
};

struct LogisticParams {
    double learning_rate = 0.1;
    int epochs = 500;
    double l2 = 1e-4;
};

enum class SplitFeatures { sqrt, all, log2 };

struct ForestParams {
    int trees = 50;
    int max_depth = 8;
    int min_leaf = 3;
    SplitFeatures features_per_split = SplitFeatures::sqrt;
    bool bootstrap = true;
};

using Hyperparameters = std::variant<KnnParams, LogisticParams, ForestParams>;

struct PredictorSpec {
    Hyperparameters params;
    std::uint64_t seed = 0;
    /// Column label in base-prediction tensors; defaults to the algorithm name.
    std::string label;

    [[nodiscard]] Algorithm algorithm() const { return static_cast<Algorithm>(params.index()); }
    [[nodiscard]] std::string name() const { return label.empty() ? to_string(algorithm()) : label; }
    /// Throws ValidationError when a hyperparameter is out of range.
    void validate() const;
};

PredictorSpec knn_spec(int k, std::string label = {});
PredictorSpec logistic_spec(LogisticParams p = {}, std::string label = {});
PredictorSpec forest_spec(ForestParams p = {}, std::uint64_t seed = 0, std::string label = {});

struct KnnModel {
    Eigen::MatrixXd x;
    std::vector<int> y;
};

/// Softmax regression; weights are classes x features.
struct LogisticModel {
    Eigen::MatrixXd weights;
    Eigen::VectorXd bias;
};

struct TreeNode {
    int feature = -1;  ///< -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    int leaf = -1;       ///< row into the tree's leaf distribution table
    int samples = 0;     ///< training rows reaching this node
};

struct DecisionTree {
    std::vector<TreeNode> nodes;
    Eigen::MatrixXd leaf_distributions;  ///< leaves x classes
};

struct ForestModel {
    std::vector<DecisionTree> trees;
};

using LearnedState = std::variant<KnnModel, LogisticModel, ForestModel>;

/// An immutable trained classifier.
class FittedPredictor {
public:
    FittedPredictor() = default;
    FittedPredictor(PredictorSpec spec, LearnedState state, int class_count, int feature_count)
        : spec_(std::move(spec)), state_(std::move(state)), class_count_(class_count), feature_count_(feature_count) {}

    [[nodiscard]] const PredictorSpec& spec() const { return spec_; }
    [[nodiscard]] const LearnedState& state() const { return state_; }
    [[nodiscard]] int class_count() const { return class_count_; }
    [[nodiscard]] int feature_count() const { return feature_count_; }

    /// Rows are probability vectors over the classes.
    [[nodiscard]] Eigen::MatrixXd predict_proba(const Eigen::MatrixXd& x) const;

    void save(std::ostream& out) const;
    static FittedPredictor load(std::istream& in);

private:
    PredictorSpec spec_;
    LearnedState state_;
    int class_count_ = 0;
    int feature_count_ = 0;
};

/// Deterministic in (spec, x, y). Labels must lie in [0, class_count).
FittedPredictor fit(const PredictorSpec& spec, const Eigen::MatrixXd& x, std::span<const int> y, int class_count);

inline Eigen::MatrixXd predict_proba(const FittedPredictor& model, const Eigen::MatrixXd& x) {
    return model.predict_proba(x);
}

/// Argmax per row, ties to the lower class index.
std::vector<int> argmax_rows(const Eigen::MatrixXd& probabilities);

}  // namespace lei
