#include "lei/base_predictors.hpp"

#include "lei/binary_io.hpp"
#include "lei/errors.hpp"
#include "lei/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lei {

std::string to_string(Algorithm a) {
    switch (a) {
        case Algorithm::knn: return "knn";
        case Algorithm::multinomial_logistic: return "multinomial_logistic";
        case Algorithm::random_forest: return "random_forest";
    }
    return "unknown";
}

Algorithm algorithm_from_string(const std::string& name) {
    if (name == "knn") return Algorithm::knn;
    if (name == "multinomial_logistic" || name == "logistic") return Algorithm::multinomial_logistic;
    if (name == "random_forest" || name == "forest") return Algorithm::random_forest;
    throw ValidationError("unknown algorithm '" + name + "'");
}

void PredictorSpec::validate() const {
    std::visit(
        [](const auto& p) {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, KnnParams>) {
                if (p.k < 1) throw ValidationError("knn.k: must be at least 1");
            } else if constexpr (std::is_same_v<P, LogisticParams>) {
                if (!(p.learning_rate > 0.0)) throw ValidationError("multinomial_logistic.learning_rate: must be positive");
                if (p.epochs < 0) throw ValidationError("multinomial_logistic.epochs: must be non-negative");
                if (!(p.l2 >= 0.0)) throw ValidationError("multinomial_logistic.l2: must be non-negative");
            } else {
                if (p.trees < 1) throw ValidationError("random_forest.trees: must be at least 1");
                if (p.max_depth < 0) throw ValidationError("random_forest.max_depth: must be non-negative");
                if (p.min_leaf < 1) throw ValidationError("random_forest.min_leaf: must be at least 1");
            }
        },
        params);
}

PredictorSpec knn_spec(int k, std::string label) { return {KnnParams{k}, 0, std::move(label)}; }
PredictorSpec logistic_spec(LogisticParams p, std::string label) { return {p, 0, std::move(label)}; }
PredictorSpec forest_spec(ForestParams p, std::uint64_t seed, std::string label) { return {p, seed, std::move(label)}; }

std::vector<int> argmax_rows(const Eigen::MatrixXd& probabilities) {
    std::vector<int> out(static_cast<std::size_t>(probabilities.rows()));
    for (Eigen::Index i = 0; i < probabilities.rows(); ++i) {
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < probabilities.cols(); ++c)
            if (probabilities(i, c) > probabilities(i, best)) best = c;
        out[i] = static_cast<int>(best);
    }
    return out;
}

namespace {

Eigen::MatrixXd softmax_rows(Eigen::MatrixXd z) {
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        z.row(i).array() -= z.row(i).maxCoeff();
        z.row(i) = z.row(i).array().exp().matrix();
        z.row(i) /= z.row(i).sum();
    }
    return z;
}

// ---------------------------------------------------------------- knn

Eigen::MatrixXd knn_predict(const KnnModel& m, int k, int C, const Eigen::MatrixXd& x) {
    const auto n = m.x.rows();
    const auto kk = static_cast<Eigen::Index>(std::min<Eigen::Index>(k, n));
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(x.rows(), C);
    std::vector<std::pair<double, Eigen::Index>> d(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index j = 0; j < n; ++j) d[j] = {(m.x.row(j) - x.row(i)).squaredNorm(), j};
        std::partial_sort(d.begin(), d.begin() + kk, d.end());
        for (Eigen::Index r = 0; r < kk; ++r) out(i, m.y[d[r].second]) += 1.0;
        out.row(i) /= static_cast<double>(kk);
    }
    return out;
}

// ---------------------------------------------------------------- logistic

LogisticModel logistic_fit(const LogisticParams& p, const Eigen::MatrixXd& x, std::span<const int> y, int C) {
    const auto n = x.rows();
    Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(n, C);
    for (Eigen::Index i = 0; i < n; ++i) onehot(i, y[i]) = 1.0;
    LogisticModel m{Eigen::MatrixXd::Zero(C, x.cols()), Eigen::VectorXd::Zero(C)};
    const double inv_n = 1.0 / static_cast<double>(n);
    for (int epoch = 0; epoch < p.epochs; ++epoch) {
        Eigen::MatrixXd logits = x * m.weights.transpose();
        logits.rowwise() += m.bias.transpose();
        Eigen::MatrixXd g = (softmax_rows(std::move(logits)) - onehot) * inv_n;
        Eigen::MatrixXd dw = g.transpose() * x + p.l2 * m.weights;
        Eigen::VectorXd db = g.colwise().sum().transpose();
        m.weights -= p.learning_rate * dw;
        m.bias -= p.learning_rate * db;
    }
    return m;
}

Eigen::MatrixXd logistic_predict(const LogisticModel& m, const Eigen::MatrixXd& x) {
    Eigen::MatrixXd logits = x * m.weights.transpose();
    logits.rowwise() += m.bias.transpose();
    return softmax_rows(std::move(logits));
}

// ---------------------------------------------------------------- forest

class TreeBuilder {
public:
    TreeBuilder(const ForestParams& p, const Eigen::MatrixXd& x, std::span<const int> y, int C, Rng& rng)
        : p_(p), x_(x), y_(y), C_(C), rng_(rng) {
        const auto F = static_cast<int>(x.cols());
        switch (p.features_per_split) {
            case SplitFeatures::all: mtry_ = F; break;
            case SplitFeatures::sqrt: mtry_ = std::max(1, static_cast<int>(std::floor(std::sqrt(F)))); break;
            case SplitFeatures::log2: mtry_ = std::max(1, static_cast<int>(std::floor(std::log2(std::max(F, 1))))); break;
        }
        mtry_ = std::min(mtry_, F);
        features_.resize(static_cast<std::size_t>(F));
        std::iota(features_.begin(), features_.end(), 0);
    }

    DecisionTree build(std::vector<Eigen::Index> rows) {
        grow(std::move(rows), 0);
        DecisionTree tree;
        tree.nodes = std::move(nodes_);
        tree.leaf_distributions.resize(static_cast<Eigen::Index>(leaves_.size()), C_);
        for (std::size_t l = 0; l < leaves_.size(); ++l) tree.leaf_distributions.row(l) = leaves_[l];
        return tree;
    }

private:
    int grow(std::vector<Eigen::Index> rows, int depth) {
        const int id = static_cast<int>(nodes_.size());
        nodes_.emplace_back();
        nodes_[id].samples = static_cast<int>(rows.size());

        Eigen::RowVectorXd counts = Eigen::RowVectorXd::Zero(C_);
        for (auto r : rows) counts(y_[r]) += 1.0;
        const double n = static_cast<double>(rows.size());
        const bool pure = (counts.array() > 0).count() <= 1;

        Split best;
        if (depth < p_.max_depth && !pure && rows.size() >= 2 * static_cast<std::size_t>(p_.min_leaf))
            best = find_split(rows, counts);

        const double parent = n - counts.squaredNorm() / n;
        if (best.feature < 0 || !(best.impurity < parent - 1e-12)) {
            nodes_[id].leaf = static_cast<int>(leaves_.size());
            leaves_.push_back(counts / n);
            return id;
        }

        std::vector<Eigen::Index> left, right;
        for (auto r : rows) (x_(r, best.feature) <= best.threshold ? left : right).push_back(r);
        rows.clear();
        rows.shrink_to_fit();
        nodes_[id].feature = best.feature;
        nodes_[id].threshold = best.threshold;
        int l = grow(std::move(left), depth + 1);
        int r = grow(std::move(right), depth + 1);
        nodes_[id].left = l;
        nodes_[id].right = r;
        return id;
    }

    struct Split {
        int feature = -1;
        double threshold = 0.0;
        double impurity = 0.0;
    };

    Split find_split(const std::vector<Eigen::Index>& rows, const Eigen::RowVectorXd& total) {
        // Partial Fisher-Yates draw of mtry candidates, then scan in ascending
        // feature order so ties resolve to the lowest feature index.
        for (int i = 0; i < mtry_; ++i) {
            std::uniform_int_distribution<int> pick(i, static_cast<int>(features_.size()) - 1);
            std::swap(features_[i], features_[pick(rng_)]);
        }
        std::vector<int> candidates(features_.begin(), features_.begin() + mtry_);
        std::sort(candidates.begin(), candidates.end());

        Split best;
        const auto n = rows.size();
        std::vector<std::pair<double, int>> sorted(n);
        std::vector<double> left(static_cast<std::size_t>(C_)), right(static_cast<std::size_t>(C_));
        double total_sq = 0.0;
        for (int c = 0; c < C_; ++c) total_sq += total(c) * total(c);
        for (int f : candidates) {
            for (std::size_t i = 0; i < n; ++i) sorted[i] = {x_(rows[i], f), y_[rows[i]]};
            std::sort(sorted.begin(), sorted.end());
            for (int c = 0; c < C_; ++c) {
                left[c] = 0.0;
                right[c] = total(c);
            }
            // Running sums of squared class counts on each side.
            double left_sq = 0.0, right_sq = total_sq;
            for (std::size_t i = 0; i + 1 < n; ++i) {
                const int c = sorted[i].second;
                left_sq += 2.0 * left[c] + 1.0;
                right_sq -= 2.0 * right[c] - 1.0;
                left[c] += 1.0;
                right[c] -= 1.0;
                const std::size_t nl = i + 1, nr = n - nl;
                if (sorted[i].first == sorted[i + 1].first) continue;
                if (nl < static_cast<std::size_t>(p_.min_leaf) || nr < static_cast<std::size_t>(p_.min_leaf)) continue;
                const double dl = static_cast<double>(nl), dr = static_cast<double>(nr);
                const double impurity = (dl - left_sq / dl) + (dr - right_sq / dr);
                if (best.feature < 0 || impurity < best.impurity) {
                    best.feature = f;
                    best.impurity = impurity;
                    best.threshold = 0.5 * (sorted[i].first + sorted[i + 1].first);
                }
            }
        }
        return best;
    }

    const ForestParams& p_;
    const Eigen::MatrixXd& x_;
    std::span<const int> y_;
    int C_;
    Rng& rng_;
    int mtry_ = 1;
    std::vector<int> features_;
    std::vector<TreeNode> nodes_;
    std::vector<Eigen::RowVectorXd> leaves_;
};

ForestModel forest_fit(const ForestParams& p, std::uint64_t seed, const Eigen::MatrixXd& x, std::span<const int> y,
                       int C) {
    ForestModel model;
    const auto n = x.rows();
    for (int t = 0; t < p.trees; ++t) {
        Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(t)}));
        std::vector<Eigen::Index> rows(static_cast<std::size_t>(n));
        if (p.bootstrap) {
            std::uniform_int_distribution<Eigen::Index> draw(0, n - 1);
            for (auto& r : rows) r = draw(rng);
            std::sort(rows.begin(), rows.end());
        } else {
            std::iota(rows.begin(), rows.end(), 0);
        }
        TreeBuilder builder(p, x, y, C, rng);
        model.trees.push_back(builder.build(std::move(rows)));
    }
    return model;
}

Eigen::MatrixXd forest_predict(const ForestModel& m, int C, const Eigen::MatrixXd& x) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(x.rows(), C);
    for (const auto& tree : m.trees) {
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            int node = 0;
            while (tree.nodes[node].feature >= 0) {
                const auto& nd = tree.nodes[node];
                node = x(i, nd.feature) <= nd.threshold ? nd.left : nd.right;
            }
            out.row(i) += tree.leaf_distributions.row(tree.nodes[node].leaf);
        }
    }
    return out / static_cast<double>(m.trees.size());
}

}  // namespace

FittedPredictor fit(const PredictorSpec& spec, const Eigen::MatrixXd& x, std::span<const int> y, int class_count) {
    spec.validate();
    if (x.rows() == 0) throw ValidationError("fit: empty training set");
    if (static_cast<std::size_t>(x.rows()) != y.size()) throw ValidationError("fit: row count differs from label count");
    if (class_count < 1) throw ValidationError("fit: class_count must be positive");
    for (int label : y)
        if (label < 0 || label >= class_count) throw ValidationError("fit: label outside [0, C-1]");
    if (!x.allFinite()) throw ValidationError("fit: non-finite feature value");

    const int F = static_cast<int>(x.cols());
    LearnedState state = std::visit(
        [&](const auto& p) -> LearnedState {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, KnnParams>) {
                return KnnModel{x, std::vector<int>(y.begin(), y.end())};
            } else if constexpr (std::is_same_v<P, LogisticParams>) {
                return logistic_fit(p, x, y, class_count);
            } else {
                return forest_fit(p, spec.seed, x, y, class_count);
            }
        },
        spec.params);
    return {spec, std::move(state), class_count, F};
}

Eigen::MatrixXd FittedPredictor::predict_proba(const Eigen::MatrixXd& x) const {
    if (x.cols() != feature_count_)
        throw ValidationError("predict_proba: expected " + std::to_string(feature_count_) + " features, got " +
                              std::to_string(x.cols()));
    return std::visit(
        [&](const auto& s) -> Eigen::MatrixXd {
            using S = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<S, KnnModel>) {
                return knn_predict(s, std::get<KnnParams>(spec_.params).k, class_count_, x);
            } else if constexpr (std::is_same_v<S, LogisticModel>) {
                return logistic_predict(s, x);
            } else {
                return forest_predict(s, class_count_, x);
            }
        },
        state_);
}

// ---------------------------------------------------------------- serialization

namespace {
constexpr std::string_view kMagic = "LEIBP";
constexpr std::uint32_t kVersion = 1;
}  // namespace

void FittedPredictor::save(std::ostream& out) const {
    binary::Writer w(out, kMagic, kVersion);
    w.put(static_cast<std::int32_t>(spec_.params.index()));
    w.put(spec_.seed);
    w.put(spec_.label);
    w.put(static_cast<std::int32_t>(class_count_));
    w.put(static_cast<std::int32_t>(feature_count_));
    std::visit(
        [&](const auto& p) {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, KnnParams>) {
                w.put(static_cast<std::int32_t>(p.k));
            } else if constexpr (std::is_same_v<P, LogisticParams>) {
                w.put(p.learning_rate);
                w.put(static_cast<std::int32_t>(p.epochs));
                w.put(p.l2);
            } else {
                w.put(static_cast<std::int32_t>(p.trees));
                w.put(static_cast<std::int32_t>(p.max_depth));
                w.put(static_cast<std::int32_t>(p.min_leaf));
                w.put(static_cast<std::int32_t>(p.features_per_split));
                w.put(static_cast<std::uint8_t>(p.bootstrap));
            }
        },
        spec_.params);
    std::visit(
        [&](const auto& s) {
            using S = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<S, KnnModel>) {
                w.put(s.x);
                std::vector<std::int32_t> labels(s.y.begin(), s.y.end());
                w.put(labels);
            } else if constexpr (std::is_same_v<S, LogisticModel>) {
                w.put(s.weights);
                w.put(s.bias);
            } else {
                w.put(static_cast<std::uint64_t>(s.trees.size()));
                for (const auto& tree : s.trees) {
                    w.put(static_cast<std::uint64_t>(tree.nodes.size()));
                    for (const auto& nd : tree.nodes) {
                        w.put(static_cast<std::int32_t>(nd.feature));
                        w.put(nd.threshold);
                        w.put(static_cast<std::int32_t>(nd.left));
                        w.put(static_cast<std::int32_t>(nd.right));
                        w.put(static_cast<std::int32_t>(nd.leaf));
                        w.put(static_cast<std::int32_t>(nd.samples));
                    }
                    w.put(tree.leaf_distributions);
                }
            }
        },
        state_);
}

FittedPredictor FittedPredictor::load(std::istream& in) {
    binary::Reader r(in, kMagic, kVersion);
    PredictorSpec spec;
    auto kind = r.get<std::int32_t>();
    spec.seed = r.get<std::uint64_t>();
    spec.label = r.get_string();
    int C = r.get<std::int32_t>();
    int F = r.get<std::int32_t>();
    LearnedState state;
    switch (kind) {
        case 0: {
            spec.params = KnnParams{r.get<std::int32_t>()};
            KnnModel m;
            m.x = r.get_matrix<double>();
            auto labels = r.get_vector<std::int32_t>();
            m.y.assign(labels.begin(), labels.end());
            state = std::move(m);
            break;
        }
        case 1: {
            LogisticParams p;
            p.learning_rate = r.get<double>();
            p.epochs = r.get<std::int32_t>();
            p.l2 = r.get<double>();
            spec.params = p;
            LogisticModel m;
            m.weights = r.get_matrix<double>();
            m.bias = r.get_matrix<double>();
            state = std::move(m);
            break;
        }
        case 2: {
            ForestParams p;
            p.trees = r.get<std::int32_t>();
            p.max_depth = r.get<std::int32_t>();
            p.min_leaf = r.get<std::int32_t>();
            p.features_per_split = static_cast<SplitFeatures>(r.get<std::int32_t>());
            p.bootstrap = r.get<std::uint8_t>() != 0;
            spec.params = p;
            ForestModel m;
            auto trees = r.get<std::uint64_t>();
            for (std::uint64_t t = 0; t < trees; ++t) {
                DecisionTree tree;
                auto nodes = r.get<std::uint64_t>();
                for (std::uint64_t i = 0; i < nodes; ++i) {
                    TreeNode nd;
                    nd.feature = r.get<std::int32_t>();
                    nd.threshold = r.get<double>();
                    nd.left = r.get<std::int32_t>();
                    nd.right = r.get<std::int32_t>();
                    nd.leaf = r.get<std::int32_t>();
                    nd.samples = r.get<std::int32_t>();
                    tree.nodes.push_back(nd);
                }
                tree.leaf_distributions = r.get_matrix<double>();
                m.trees.push_back(std::move(tree));
            }
            state = std::move(m);
            break;
        }
        default: throw ValidationError("unknown predictor kind in container");
    }
    return {std::move(spec), std::move(state), C, F};
}

}  // namespace lei
