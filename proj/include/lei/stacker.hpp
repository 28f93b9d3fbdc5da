#pragma once

#include "lei/losses.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace lei {

struct BasePredictionTensor;

enum class HeadKind { time_distributed_mlp, longitudinal_softmax, time_dependent_per_step };

std::string to_string(HeadKind h);
HeadKind head_kind_from_string(const std::string& name);

/// One samples x features matrix per step.
using Sequence = std::vector<Eigen::MatrixXd>;

struct StackerConfig {
    int input_width = 0;
    std::vector<int> hidden_sizes{32};
    HeadKind head = HeadKind::time_distributed_mlp;
    int mlp_hidden = 32;
    int class_count = 3;
    /// Steps covered by the per-step head; 0 takes the training sequence length.
    int time_steps = 0;
    int epochs = 300;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 0;

    void validate() const;
    bool operator==(const StackerConfig&) const = default;
};

/// Defaults for a head: one layer of 32 units, or 32 then C for the
/// longitudinal head.
StackerConfig default_stacker_config(HeadKind head, int input_width, int class_count);

/// Offsets of each parameter group inside the flat parameter vector.
struct StackerLayout {
    struct Layer {
        int input = 0, hidden = 0;
        Eigen::Index w = 0, u = 0, b = 0;  ///< W: 4H x in, U: 4H x H, b: 4H; gate rows i, f, o, g
    };
    std::vector<Layer> layers;
    Eigen::Index mlp_w1 = 0, mlp_b1 = 0, mlp_w2 = 0, mlp_b2 = 0;
    Eigen::Index step_w = 0, step_b = 0;  ///< per step: C x H then C
    Eigen::Index size = 0;

    explicit StackerLayout(const StackerConfig& config);
};

struct StackerModel {
    StackerConfig config;
    Eigen::VectorXd params;

    [[nodiscard]] StackerLayout layout() const { return StackerLayout(config); }
    bool operator==(const StackerModel& other) const { return config == other.config && params == other.params; }
};

/// Seeded initialization: uniform in +-1/sqrt(fan-in), forget-gate bias +1.
StackerModel initialize_stacker(StackerConfig config);

/// Output at step t is the class distribution for the label at t + 1.
Sequence forward(const StackerModel& model, const Sequence& inputs);
Sequence forward(const StackerModel& model, const BasePredictionTensor& tensor);

struct LossAndGradient {
    double loss = 0.0;
    Eigen::VectorXd gradient;
};

/// Exact gradient of the loss; `targets` is samples x steps.
LossAndGradient backward(const StackerModel& model, const Sequence& inputs, const Eigen::MatrixXi& targets,
                         const LossSpec& loss);

/// Full-batch Adam. Throws NumericError naming the epoch on a non-finite loss.
/// `curve`, when given, receives the loss before each epoch's update.
StackerModel train_stacker(StackerConfig config, const Sequence& inputs, const Eigen::MatrixXi& targets,
                           const LossSpec& loss, std::vector<double>* curve = nullptr);

Sequence tensor_steps(const BasePredictionTensor& tensor);

void save_stacker(const StackerModel& model, std::ostream& out);
StackerModel load_stacker(std::istream& in);

/// `epoch,loss` rows.
void write_training_curve(const std::vector<double>& curve, const std::filesystem::path& path);

}  // namespace lei
