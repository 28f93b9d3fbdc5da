#include "lei/stacker.hpp"

#include "lei/binary_io.hpp"
#include "lei/bp_tensor.hpp"
#include "lei/errors.hpp"
#include "lei/parallel.hpp"
#include "lei/random.hpp"
#include "lei/text_io.hpp"

#include <cmath>
#include <fstream>

namespace lei {

namespace {

using Mat = Eigen::MatrixXd;
using CMap = Eigen::Map<const Mat>;
using MMap = Eigen::Map<Mat>;
using CVec = Eigen::Map<const Eigen::VectorXd>;
using MVec = Eigen::Map<Eigen::VectorXd>;

constexpr Eigen::Index kChunk = 256;
constexpr std::uint32_t kFormatVersion = 1;

Mat sigmoid(const Mat& z) { return (1.0 + (-z.array()).exp()).inverse().matrix(); }

void softmax_rows(Mat& z) {
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
        auto row = z.row(r);
        row.array() -= row.maxCoeff();
        row = row.array().exp().matrix();
        row /= row.sum();
    }
}

int head_steps(const StackerConfig& c) { return c.head == HeadKind::time_dependent_per_step ? c.time_steps : 0; }

/// Everything forward computes for one chunk; rows of a step block sit at
/// t * B .. (t + 1) * B.
struct Trace {
    Eigen::Index batch = 0, steps = 0;
    std::vector<Mat> input;  ///< per layer: stacked inputs
    std::vector<Mat> i, f, o, g, c, tc, h;
    Mat hidden;  ///< mlp hidden activations
    Mat probs;
};

Trace run_forward(const StackerModel& model, const StackerLayout& lay, const Sequence& inputs, Eigen::Index r0,
                  Eigen::Index B) {
    const auto& cfg = model.config;
    const double* p = model.params.data();
    Trace tr;
    tr.batch = B;
    tr.steps = static_cast<Eigen::Index>(inputs.size());
    const Eigen::Index T = tr.steps;

    Mat x(T * B, cfg.input_width);
    for (Eigen::Index t = 0; t < T; ++t) x.middleRows(t * B, B) = inputs[t].middleRows(r0, B);

    const std::size_t L = lay.layers.size();
    tr.input.resize(L);
    for (auto* v : {&tr.i, &tr.f, &tr.o, &tr.g, &tr.c, &tr.tc, &tr.h}) v->resize(L);
    for (std::size_t l = 0; l < L; ++l) {
        const auto& ly = lay.layers[l];
        const int H = ly.hidden;
        CMap W(p + ly.w, 4 * H, ly.input), U(p + ly.u, 4 * H, H);
        CVec b(p + ly.b, 4 * H);
        tr.input[l] = std::move(x);
        Mat z = tr.input[l] * W.transpose();
        z.rowwise() += b.transpose();
        for (auto* v : {&tr.i[l], &tr.f[l], &tr.o[l], &tr.g[l], &tr.c[l], &tr.tc[l], &tr.h[l]}) v->resize(T * B, H);
        for (Eigen::Index t = 0; t < T; ++t) {
            Mat zt = z.middleRows(t * B, B);
            if (t > 0) zt.noalias() += tr.h[l].middleRows((t - 1) * B, B) * U.transpose();
            auto ig = tr.i[l].middleRows(t * B, B);
            auto fg = tr.f[l].middleRows(t * B, B);
            auto og = tr.o[l].middleRows(t * B, B);
            auto gg = tr.g[l].middleRows(t * B, B);
            ig = sigmoid(zt.leftCols(H));
            fg = sigmoid(zt.middleCols(H, H));
            og = sigmoid(zt.middleCols(2 * H, H));
            gg = zt.rightCols(H).array().tanh().matrix();
            auto ct = tr.c[l].middleRows(t * B, B);
            ct = ig.cwiseProduct(gg);
            if (t > 0) ct += fg.cwiseProduct(tr.c[l].middleRows((t - 1) * B, B));
            tr.tc[l].middleRows(t * B, B) = ct.array().tanh().matrix();
            tr.h[l].middleRows(t * B, B) = og.cwiseProduct(tr.tc[l].middleRows(t * B, B));
        }
        x = tr.h[l];
    }

    const Mat& top = tr.h[L - 1];
    const int C = cfg.class_count;
    const int Ht = lay.layers.back().hidden;
    switch (cfg.head) {
        case HeadKind::time_distributed_mlp: {
            CMap W1(p + lay.mlp_w1, cfg.mlp_hidden, Ht), W2(p + lay.mlp_w2, C, cfg.mlp_hidden);
            CVec b1(p + lay.mlp_b1, cfg.mlp_hidden), b2(p + lay.mlp_b2, C);
            Mat a = top * W1.transpose();
            a.rowwise() += b1.transpose();
            tr.hidden = a.array().tanh().matrix();
            tr.probs = tr.hidden * W2.transpose();
            tr.probs.rowwise() += b2.transpose();
            break;
        }
        case HeadKind::longitudinal_softmax: tr.probs = top; break;
        case HeadKind::time_dependent_per_step: {
            tr.probs.resize(T * B, C);
            for (Eigen::Index t = 0; t < T; ++t) {
                CMap Wt(p + lay.step_w + t * C * Ht, C, Ht);
                CVec bt(p + lay.step_b + t * C, C);
                tr.probs.middleRows(t * B, B) = top.middleRows(t * B, B) * Wt.transpose();
                tr.probs.middleRows(t * B, B).rowwise() += bt.transpose();
            }
            break;
        }
    }
    softmax_rows(tr.probs);
    return tr;
}

/// Adds the chunk's gradient into `grad` and returns its summed loss.
double run_backward(const StackerModel& model, const StackerLayout& lay, const Trace& tr,
                    const Eigen::MatrixXi& targets, Eigen::Index r0, const LossSpec& loss, double inv_n,
                    Eigen::VectorXd& grad) {
    const auto& cfg = model.config;
    const double* p = model.params.data();
    double* gp = grad.data();
    const Eigen::Index B = tr.batch, T = tr.steps;
    const int C = cfg.class_count;

    // Softmax and weighted cross-entropy fused at the logits.
    Mat dlogits = Mat::Zero(T * B, C);
    double total = 0.0;
    for (Eigen::Index t = 0; t < T; ++t)
        for (Eigen::Index s = 0; s < B; ++s) {
            const Eigen::Index r = t * B + s;
            const int y = targets(r0 + s, t);
            const double w = example_weight(loss, tr.probs.row(r), y, static_cast<std::size_t>(t));
            if (w == 0.0) continue;
            const double q = tr.probs(r, y);
            total -= w * std::log(std::max(q, kLogFloor));
            if (q <= kLogFloor) continue;
            dlogits.row(r) = (w * inv_n) * tr.probs.row(r);
            dlogits(r, y) -= w * inv_n;
        }

    const std::size_t L = lay.layers.size();
    const Mat& top = tr.h[L - 1];
    const int Ht = lay.layers.back().hidden;
    Mat dh;
    switch (cfg.head) {
        case HeadKind::time_distributed_mlp: {
            CMap W1(p + lay.mlp_w1, cfg.mlp_hidden, Ht), W2(p + lay.mlp_w2, C, cfg.mlp_hidden);
            MMap(gp + lay.mlp_w2, C, cfg.mlp_hidden).noalias() += dlogits.transpose() * tr.hidden;
            MVec(gp + lay.mlp_b2, C) += dlogits.colwise().sum().transpose();
            Mat da = (dlogits * W2).cwiseProduct((1.0 - tr.hidden.array().square()).matrix());
            MMap(gp + lay.mlp_w1, cfg.mlp_hidden, Ht).noalias() += da.transpose() * top;
            MVec(gp + lay.mlp_b1, cfg.mlp_hidden) += da.colwise().sum().transpose();
            dh = da * W1;
            break;
        }
        case HeadKind::longitudinal_softmax: dh = std::move(dlogits); break;
        case HeadKind::time_dependent_per_step: {
            dh.resize(T * B, Ht);
            for (Eigen::Index t = 0; t < T; ++t) {
                CMap Wt(p + lay.step_w + t * C * Ht, C, Ht);
                auto dl = dlogits.middleRows(t * B, B);
                MMap(gp + lay.step_w + t * C * Ht, C, Ht).noalias() += dl.transpose() * top.middleRows(t * B, B);
                MVec(gp + lay.step_b + t * C, C) += dl.colwise().sum().transpose();
                dh.middleRows(t * B, B) = dl * Wt;
            }
            break;
        }
    }

    for (std::size_t l = L; l-- > 0;) {
        const auto& ly = lay.layers[l];
        const int H = ly.hidden;
        CMap W(p + ly.w, 4 * H, ly.input), U(p + ly.u, 4 * H, H);
        Mat dz(T * B, 4 * H);
        Mat dh_next = Mat::Zero(B, H), dc_next = Mat::Zero(B, H);
        for (Eigen::Index t = T; t-- > 0;) {
            const auto rows = [&](const Mat& m) { return m.middleRows(t * B, B).array(); };
            auto i = rows(tr.i[l]), f = rows(tr.f[l]), o = rows(tr.o[l]), g = rows(tr.g[l]), tc = rows(tr.tc[l]);
            Eigen::ArrayXXd dht = dh.middleRows(t * B, B).array() + dh_next.array();
            Eigen::ArrayXXd dc = dht * o * (1.0 - tc.square()) + dc_next.array();
            auto dzt = dz.middleRows(t * B, B);
            dzt.leftCols(H) = (dc * g * i * (1.0 - i)).matrix();
            if (t > 0)
                dzt.middleCols(H, H) = (dc * tr.c[l].middleRows((t - 1) * B, B).array() * f * (1.0 - f)).matrix();
            else
                dzt.middleCols(H, H).setZero();
            dzt.middleCols(2 * H, H) = (dht * tc * o * (1.0 - o)).matrix();
            dzt.rightCols(H) = (dc * i * (1.0 - g.square())).matrix();
            dh_next.noalias() = dzt * U;
            dc_next = (dc * f).matrix();
        }
        MMap(gp + ly.w, 4 * H, ly.input).noalias() += dz.transpose() * tr.input[l];
        MVec(gp + ly.b, 4 * H) += dz.colwise().sum().transpose();
        if (T > 1)
            MMap(gp + ly.u, 4 * H, H).noalias() +=
                dz.bottomRows((T - 1) * B).transpose() * tr.h[l].topRows((T - 1) * B);
        if (l > 0) dh = dz * W;
    }
    return total;
}

void check_inputs(const StackerConfig& cfg, const Sequence& inputs) {
    if (inputs.empty()) throw ValidationError("stacker: input sequence has no steps");
    const auto n = inputs.front().rows();
    for (const auto& step : inputs) {
        if (step.cols() != cfg.input_width)
            throw ValidationError("stacker: input width " + std::to_string(step.cols()) + " does not match configured " +
                                  std::to_string(cfg.input_width));
        if (step.rows() != n) throw ValidationError("stacker: steps differ in sample count");
    }
    if (cfg.head == HeadKind::time_dependent_per_step && static_cast<int>(inputs.size()) > cfg.time_steps)
        throw ValidationError("stacker: sequence longer than the per-step head's " + std::to_string(cfg.time_steps) +
                              " steps");
}

}  // namespace

std::string to_string(HeadKind h) {
    switch (h) {
        case HeadKind::time_distributed_mlp: return "time_distributed_mlp";
        case HeadKind::longitudinal_softmax: return "longitudinal_softmax";
        case HeadKind::time_dependent_per_step: return "time_dependent_per_step";
    }
    return "?";
}

HeadKind head_kind_from_string(const std::string& name) {
    if (name == "time_distributed_mlp") return HeadKind::time_distributed_mlp;
    if (name == "longitudinal_softmax") return HeadKind::longitudinal_softmax;
    if (name == "time_dependent_per_step") return HeadKind::time_dependent_per_step;
    throw ValidationError("unknown head '" + name + "'");
}

void StackerConfig::validate() const {
    if (input_width < 1) throw ValidationError("stacker: input_width must be positive");
    if (hidden_sizes.empty()) throw ValidationError("stacker: hidden_sizes must name at least one layer");
    for (int h : hidden_sizes)
        if (h < 1) throw ValidationError("stacker: hidden sizes must be positive");
    if (class_count < 2) throw ValidationError("stacker: class_count must be at least 2");
    if (head == HeadKind::time_distributed_mlp && mlp_hidden < 1)
        throw ValidationError("stacker: mlp_hidden must be positive");
    if (head == HeadKind::longitudinal_softmax && hidden_sizes.back() != class_count)
        throw ValidationError("stacker: longitudinal_softmax needs the last hidden size (" +
                              std::to_string(hidden_sizes.back()) + ") to equal class_count (" +
                              std::to_string(class_count) + ")");
    if (head == HeadKind::time_dependent_per_step && time_steps < 1)
        throw ValidationError("stacker: time_dependent_per_step needs time_steps");
    if (epochs < 0) throw ValidationError("stacker: epochs must be non-negative");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
        throw ValidationError("stacker: learning_rate must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
        throw ValidationError("stacker: betas must lie in [0, 1)");
    if (!(epsilon > 0.0)) throw ValidationError("stacker: epsilon must be positive");
}

StackerConfig default_stacker_config(HeadKind head, int input_width, int class_count) {
    StackerConfig c;
    c.head = head;
    c.input_width = input_width;
    c.class_count = class_count;
    if (head == HeadKind::longitudinal_softmax) c.hidden_sizes = {32, class_count};
    return c;
}

StackerLayout::StackerLayout(const StackerConfig& config) {
    Eigen::Index at = 0;
    int in = config.input_width;
    for (int h : config.hidden_sizes) {
        Layer l;
        l.input = in;
        l.hidden = h;
        l.w = at;
        at += 4 * h * in;
        l.u = at;
        at += 4 * h * h;
        l.b = at;
        at += 4 * h;
        layers.push_back(l);
        in = h;
    }
    const int C = config.class_count;
    if (config.head == HeadKind::time_distributed_mlp) {
        mlp_w1 = at;
        at += config.mlp_hidden * in;
        mlp_b1 = at;
        at += config.mlp_hidden;
        mlp_w2 = at;
        at += C * config.mlp_hidden;
        mlp_b2 = at;
        at += C;
    } else if (config.head == HeadKind::time_dependent_per_step) {
        const int T = head_steps(config);
        step_w = at;
        at += static_cast<Eigen::Index>(T) * C * in;
        step_b = at;
        at += static_cast<Eigen::Index>(T) * C;
    }
    size = at;
}

StackerModel initialize_stacker(StackerConfig config) {
    config.validate();
    StackerLayout lay(config);
    StackerModel model{config, Eigen::VectorXd::Zero(lay.size)};
    Rng rng(derive_seed(config.seed, {0x57ac}));
    auto fill = [&](Eigen::Index at, Eigen::Index count, int fan_in) {
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        const double r = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (Eigen::Index k = 0; k < count; ++k) model.params(at + k) = r * u(rng);
    };
    for (const auto& l : lay.layers) {
        fill(l.w, 4 * l.hidden * l.input, l.input + l.hidden);
        fill(l.u, 4 * l.hidden * l.hidden, l.input + l.hidden);
        model.params.segment(l.b + l.hidden, l.hidden).setOnes();
    }
    const int Ht = lay.layers.back().hidden;
    const int C = config.class_count;
    if (config.head == HeadKind::time_distributed_mlp) {
        fill(lay.mlp_w1, config.mlp_hidden * Ht, Ht);
        fill(lay.mlp_w2, C * config.mlp_hidden, config.mlp_hidden);
    } else if (config.head == HeadKind::time_dependent_per_step) {
        fill(lay.step_w, static_cast<Eigen::Index>(config.time_steps) * C * Ht, Ht);
    }
    return model;
}

Sequence forward(const StackerModel& model, const Sequence& inputs) {
    check_inputs(model.config, inputs);
    const StackerLayout lay(model.config);
    if (model.params.size() != lay.size) throw ValidationError("stacker: parameter vector does not match the config");
    const auto N = inputs.front().rows();
    const auto T = static_cast<Eigen::Index>(inputs.size());
    Sequence out(inputs.size(), Mat(N, model.config.class_count));
    const auto chunks = static_cast<std::size_t>((N + kChunk - 1) / kChunk);
    parallel_for(chunks, [&](std::size_t k) {
        const Eigen::Index r0 = static_cast<Eigen::Index>(k) * kChunk, B = std::min(kChunk, N - r0);
        auto tr = run_forward(model, lay, inputs, r0, B);
        for (Eigen::Index t = 0; t < T; ++t) out[t].middleRows(r0, B) = tr.probs.middleRows(t * B, B);
    });
    return out;
}

Sequence tensor_steps(const BasePredictionTensor& tensor) { return tensor.steps; }

Sequence forward(const StackerModel& model, const BasePredictionTensor& tensor) { return forward(model, tensor.steps); }

LossAndGradient backward(const StackerModel& model, const Sequence& inputs, const Eigen::MatrixXi& targets,
                         const LossSpec& loss) {
    check_inputs(model.config, inputs);
    const StackerLayout lay(model.config);
    if (model.params.size() != lay.size) throw ValidationError("stacker: parameter vector does not match the config");
    const auto N = inputs.front().rows();
    if (targets.rows() != N || targets.cols() != static_cast<Eigen::Index>(inputs.size()))
        throw ValidationError("stacker: targets must be samples x steps");
    if (loss.class_count != model.config.class_count) throw ValidationError("stacker: loss class count differs");
    loss.validate(inputs.size());
    if ((targets.array() < 0).any() || (targets.array() >= model.config.class_count).any())
        throw ValidationError("stacker: target label out of range");

    LossAndGradient out{0.0, Eigen::VectorXd::Zero(lay.size)};
    if (N == 0) return out;
    const double inv_n = 1.0 / static_cast<double>(N);
    const auto chunks = static_cast<std::size_t>((N + kChunk - 1) / kChunk);
    std::vector<Eigen::VectorXd> grads(chunks);
    std::vector<double> losses(chunks, 0.0);
    parallel_for(chunks, [&](std::size_t k) {
        const Eigen::Index r0 = static_cast<Eigen::Index>(k) * kChunk, B = std::min(kChunk, N - r0);
        auto tr = run_forward(model, lay, inputs, r0, B);
        grads[k] = Eigen::VectorXd::Zero(lay.size);
        losses[k] = run_backward(model, lay, tr, targets, r0, loss, inv_n, grads[k]);
    });
    for (std::size_t k = 0; k < chunks; ++k) {
        out.gradient += grads[k];
        out.loss += losses[k];
    }
    out.loss *= inv_n;
    return out;
}

StackerModel train_stacker(StackerConfig config, const Sequence& inputs, const Eigen::MatrixXi& targets,
                           const LossSpec& loss, std::vector<double>* curve) {
    if (inputs.empty() || inputs.front().rows() == 0) throw ValidationError("stacker: empty training set");
    if (config.head == HeadKind::time_dependent_per_step && config.time_steps == 0)
        config.time_steps = static_cast<int>(inputs.size());
    auto model = initialize_stacker(config);
    if (curve) curve->clear();
    Eigen::VectorXd m = Eigen::VectorXd::Zero(model.params.size()), v = m;
    double b1 = 1.0, b2 = 1.0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        auto lg = backward(model, inputs, targets, loss);
        if (!std::isfinite(lg.loss) || !lg.gradient.allFinite())
            throw NumericError("stacker: non-finite loss at epoch " + std::to_string(epoch));
        if (curve) curve->push_back(lg.loss);
        b1 *= config.beta1;
        b2 *= config.beta2;
        m = config.beta1 * m + (1.0 - config.beta1) * lg.gradient;
        v = config.beta2 * v + (1.0 - config.beta2) * lg.gradient.cwiseAbs2();
        const double step = config.learning_rate * std::sqrt(1.0 - b2) / (1.0 - b1);
        model.params.array() -= step * m.array() / (v.array().sqrt() + config.epsilon * std::sqrt(1.0 - b2));
    }
    return model;
}

void save_stacker(const StackerModel& model, std::ostream& out) {
    binary::Writer w(out, "LEISTK", kFormatVersion);
    const auto& c = model.config;
    w.put(static_cast<std::int32_t>(c.input_width));
    std::vector<std::int32_t> hidden(c.hidden_sizes.begin(), c.hidden_sizes.end());
    w.put(hidden);
    w.put(to_string(c.head));
    w.put(static_cast<std::int32_t>(c.mlp_hidden));
    w.put(static_cast<std::int32_t>(c.class_count));
    w.put(static_cast<std::int32_t>(c.time_steps));
    w.put(static_cast<std::int32_t>(c.epochs));
    w.put(c.learning_rate);
    w.put(c.beta1);
    w.put(c.beta2);
    w.put(c.epsilon);
    w.put(c.seed);
    Eigen::MatrixXd params = model.params;
    w.put(params);
    if (!out) throw IoError("failed writing stacker model");
}

StackerModel load_stacker(std::istream& in) {
    binary::Reader r(in, "LEISTK", kFormatVersion);
    StackerModel model;
    auto& c = model.config;
    c.input_width = r.get<std::int32_t>();
    auto hidden = r.get_vector<std::int32_t>();
    c.hidden_sizes.assign(hidden.begin(), hidden.end());
    c.head = head_kind_from_string(r.get_string());
    c.mlp_hidden = r.get<std::int32_t>();
    c.class_count = r.get<std::int32_t>();
    c.time_steps = r.get<std::int32_t>();
    c.epochs = r.get<std::int32_t>();
    c.learning_rate = r.get<double>();
    c.beta1 = r.get<double>();
    c.beta2 = r.get<double>();
    c.epsilon = r.get<double>();
    c.seed = r.get<std::uint64_t>();
    c.validate();
    Eigen::MatrixXd params = r.get_matrix<double>();
    if (params.cols() != 1 || params.rows() != StackerLayout(c).size)
        throw ValidationError("stacker container: parameter count does not match its config");
    model.params = params.col(0);
    return model;
}

void write_training_curve(const std::vector<double>& curve, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "epoch,loss\n";
    for (std::size_t e = 0; e < curve.size(); ++e) out << e << ',' << text::format_double(curve[e]) << '\n';
}

}  // namespace lei
