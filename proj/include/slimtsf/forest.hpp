#pragma once

// Class-weighted random forest with weighted-Gini splits and impurity-based
// feature importances.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "slimtsf/error.hpp"
#include "slimtsf/features.hpp"
#include "slimtsf/io.hpp"
#include "slimtsf/parallel.hpp"
#include "slimtsf/rng.hpp"

namespace slimtsf {

/// Gini impurity 1 - p+^2 - p-^2 of class-weighted counts.
inline double gini_impurity(double w_pos, double w_neg) {
    const double total = w_pos + w_neg;
    if (!(total > 0.0)) throw ArgumentError("gini impurity of zero total weight");
    const double p = w_pos / total;
    const double q = w_neg / total;
    return 1.0 - p * p - q * q;
}

/// How many features each split examines.
struct MaxFeatures {
    enum class Rule { Sqrt, Log2, All, Fixed };
    Rule rule = Rule::Sqrt;
    std::size_t k = 0; // Fixed only

    std::size_t resolve(std::size_t n_features) const {
        std::size_t m = n_features;
        switch (rule) {
        case Rule::Sqrt: m = static_cast<std::size_t>(std::sqrt(static_cast<double>(n_features))); break;
        case Rule::Log2: m = static_cast<std::size_t>(std::log2(static_cast<double>(std::max<std::size_t>(1, n_features)))); break;
        case Rule::All: m = n_features; break;
        case Rule::Fixed: m = k; break;
        }
        return std::clamp<std::size_t>(m, 1, std::max<std::size_t>(1, n_features));
    }

    std::string str() const {
        switch (rule) {
        case Rule::Sqrt: return "sqrt";
        case Rule::Log2: return "log2";
        case Rule::All: return "all";
        case Rule::Fixed: return std::to_string(k);
        }
        return "sqrt";
    }

    static MaxFeatures parse(std::string_view s) {
        if (s == "sqrt") return {Rule::Sqrt, 0};
        if (s == "log2") return {Rule::Log2, 0};
        if (s == "all") return {Rule::All, 0};
        std::size_t k = 0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), k);
        if (s.empty() || ec != std::errc{} || p != s.data() + s.size() || k == 0)
            throw ArgumentError("max_features must be sqrt, log2, all or a positive integer, got '" + std::string(s) + "'");
        return {Rule::Fixed, k};
    }

    friend bool operator==(const MaxFeatures&, const MaxFeatures&) = default;
};

struct ForestParams {
    std::size_t n_trees = 100;
    std::optional<std::size_t> max_depth = 8;
    std::size_t min_samples_leaf = 5;
    MaxFeatures max_features;
    /// Sample weight of the positive class; negatives weigh 1.
    double class_weight_positive = 1.0;
    bool bootstrap_rows = true;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_trees < 1) throw ArgumentError("n_trees must be >= 1");
        if (min_samples_leaf < 1) throw ArgumentError("min_samples_leaf must be >= 1");
        if (max_depth && *max_depth < 1) throw ArgumentError("max_depth must be >= 1");
        if (!(class_weight_positive > 0.0) || !std::isfinite(class_weight_positive))
            throw ArgumentError("class_weight_positive must be a positive finite number");
    }

    friend bool operator==(const ForestParams&, const ForestParams&) = default;
};

inline nlohmann::json to_json(const ForestParams& p) {
    nlohmann::json j;
    j["n_trees"] = p.n_trees;
    j["max_depth"] = p.max_depth ? nlohmann::json(*p.max_depth) : nlohmann::json(nullptr);
    j["min_samples_leaf"] = p.min_samples_leaf;
    j["max_features"] = p.max_features.str();
    j["class_weight_positive"] = p.class_weight_positive;
    j["bootstrap_rows"] = p.bootstrap_rows;
    j["seed"] = p.seed;
    return j;
}

inline ForestParams forest_params_from_json(const nlohmann::json& j) {
    ForestParams p;
    p.n_trees = j.at("n_trees").get<std::size_t>();
    if (j.at("max_depth").is_null()) p.max_depth.reset();
    else p.max_depth = j.at("max_depth").get<std::size_t>();
    p.min_samples_leaf = j.at("min_samples_leaf").get<std::size_t>();
    p.max_features = MaxFeatures::parse(j.at("max_features").get<std::string>());
    p.class_weight_positive = j.at("class_weight_positive").get<double>();
    p.bootstrap_rows = j.at("bootstrap_rows").get<bool>();
    p.seed = j.at("seed").get<std::uint64_t>();
    p.validate();
    return p;
}

/// Flat node array; node 0 is the root. Leaves have feature == -1.
struct TreeNode {
    std::int32_t feature = -1;
    double threshold = 0.0;         // x <= threshold goes left
    std::uint32_t left = 0;
    std::uint32_t right = 0;
    double positive_score = 0.0;    // weighted positive fraction of the node's samples
    double gain = 0.0;              // weighted Gini decrease of the split, per unit node weight
    double weight = 0.0;            // total sample weight reaching the node

    bool is_leaf() const { return feature < 0; }
};

class DecisionTree {
public:
    DecisionTree() = default;
    explicit DecisionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}

    const std::vector<TreeNode>& nodes() const { return nodes_; }

    const TreeNode& leaf_for(std::span<const double> row) const {
        std::size_t i = 0;
        while (!nodes_[i].is_leaf())
            i = row[static_cast<std::size_t>(nodes_[i].feature)] <= nodes_[i].threshold ? nodes_[i].left : nodes_[i].right;
        return nodes_[i];
    }

    /// Leaf class scores are {1 - s, s} for s = positive_score.
    double positive_score(std::span<const double> row) const { return leaf_for(row).positive_score; }

    std::size_t depth() const {
        std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};
        std::size_t best = 0;
        while (!stack.empty()) {
            auto [i, d] = stack.back();
            stack.pop_back();
            best = std::max(best, d);
            if (!nodes_[i].is_leaf()) {
                stack.push_back({nodes_[i].left, d + 1});
                stack.push_back({nodes_[i].right, d + 1});
            }
        }
        return best;
    }

private:
    std::vector<TreeNode> nodes_;
};

struct ForestModel {
    std::vector<DecisionTree> trees;
    std::vector<std::string> feature_ids;
    ForestParams params;
    /// Non-negative, summing to 1 whenever any tree split at all.
    std::vector<double> importances;
    double threshold = 0.5;
};

namespace detail {

/// Column-major copy of the training matrix plus per-row labels/weights.
struct TrainingView {
    std::size_t n_rows = 0;
    std::size_t n_cols = 0;
    std::vector<double> columns;
    std::vector<std::uint8_t> positive;

    double value(std::size_t row, std::size_t col) const { return columns[col * n_rows + row]; }
};

struct SplitChoice {
    std::size_t feature = 0;
    double threshold = 0.0;
    double gain = -1.0;
    bool found = false;
};

inline constexpr double kGainTolerance = 1e-12;

/// True when (gain, feature, threshold) should replace `best`:
/// higher gain wins; equal gains prefer the lower feature index, then lower threshold.
inline bool better_split(double gain, std::size_t feature, double threshold, const SplitChoice& best) {
    if (!best.found) return true;
    if (gain > best.gain + kGainTolerance) return true;
    if (gain < best.gain - kGainTolerance) return false;
    if (feature != best.feature) return feature < best.feature;
    return threshold < best.threshold;
}

inline double midpoint(double a, double b) {
    const double m = a + (b - a) / 2.0;
    return (m >= b || m < a) ? a : m;
}

class TreeBuilder {
public:
    TreeBuilder(const TrainingView& data, const ForestParams& params, std::uint64_t seed,
                std::vector<double>& importance)
        : data_(data), params_(params), rng_(seed), importance_(importance),
          weight_pos_(params.class_weight_positive),
          mtry_(params.max_features.resolve(data.n_cols)) {}

    DecisionTree build(std::vector<std::uint32_t> samples) {
        samples_ = std::move(samples);
        features_.resize(data_.n_cols);
        std::iota(features_.begin(), features_.end(), 0u);
        nodes_.clear();
        nodes_.emplace_back();
        struct Task {
            std::size_t node, begin, end, depth;
        };
        std::vector<Task> stack{{0, 0, samples_.size(), 0}};
        while (!stack.empty()) {
            const Task task = stack.back();
            stack.pop_back();
            double w_pos = 0.0, w_neg = 0.0;
            for (std::size_t i = task.begin; i < task.end; ++i) (data_.positive[samples_[i]] ? w_pos : w_neg) += 1.0;
            w_pos *= weight_pos_;
            const double w = w_pos + w_neg;
            if (task.node == 0) root_weight_ = w;
            nodes_[task.node].weight = w;
            nodes_[task.node].positive_score = w_pos / w;

            const std::size_t n = task.end - task.begin;
            const bool depth_ok = !params_.max_depth || task.depth < *params_.max_depth;
            if (w_pos == 0.0 || w_neg == 0.0 || !depth_ok || n < 2 * params_.min_samples_leaf) continue;

            const SplitChoice split = find_split(task.begin, task.end, w_pos, w_neg);
            if (!split.found || !(split.gain > kGainTolerance)) continue;

            auto mid = std::partition(samples_.begin() + static_cast<std::ptrdiff_t>(task.begin),
                                      samples_.begin() + static_cast<std::ptrdiff_t>(task.end), [&](std::uint32_t r) {
                                          return data_.value(r, split.feature) <= split.threshold;
                                      });
            const std::size_t cut = static_cast<std::size_t>(mid - samples_.begin());
            const auto left = static_cast<std::uint32_t>(nodes_.size());
            nodes_.emplace_back();
            nodes_.emplace_back();
            TreeNode& node = nodes_[task.node];
            node.feature = static_cast<std::int32_t>(split.feature);
            node.threshold = split.threshold;
            node.left = left;
            node.right = left + 1;
            node.gain = split.gain;
            importance_[split.feature] += (w / root_weight_) * split.gain;
            stack.push_back({left + 1u, cut, task.end, task.depth + 1});
            stack.push_back({left, task.begin, cut, task.depth + 1});
        }
        return DecisionTree(std::move(nodes_));
    }

private:
    SplitChoice find_split(std::size_t begin, std::size_t end, double w_pos, double w_neg) {
        const double w_total = w_pos + w_neg;
        const double parent = gini_impurity(w_pos, w_neg);
        const std::size_t n = end - begin;
        SplitChoice best;
        std::size_t visited = 0;
        // Partial Fisher-Yates over the feature list; constant features do not count toward mtry.
        for (std::size_t k = 0; k < features_.size() && visited < mtry_; ++k) {
            const std::size_t pick = k + static_cast<std::size_t>(rng_.below(features_.size() - k));
            std::swap(features_[k], features_[pick]);
            const std::size_t f = features_[k];

            buffer_.clear();
            for (std::size_t i = begin; i < end; ++i) {
                const auto r = samples_[i];
                buffer_.push_back({data_.value(r, f), data_.positive[r] != 0});
            }
            std::sort(buffer_.begin(), buffer_.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });
            if (buffer_.front().first == buffer_.back().first) continue;
            ++visited;

            double left_pos = 0.0, left_neg = 0.0;
            for (std::size_t i = 0; i + 1 < n; ++i) {
                (buffer_[i].second ? left_pos : left_neg) += 1.0;
                if (buffer_[i].first == buffer_[i + 1].first) continue;
                const std::size_t n_left = i + 1;
                if (n_left < params_.min_samples_leaf || n - n_left < params_.min_samples_leaf) continue;
                const double lp = left_pos * weight_pos_, ln = left_neg;
                const double rp = w_pos - lp, rn = w_neg - ln;
                const double wl = lp + ln, wr = rp + rn;
                const double gain = parent - (wl / w_total) * gini_impurity(lp, ln) - (wr / w_total) * gini_impurity(rp, rn);
                const double thr = midpoint(buffer_[i].first, buffer_[i + 1].first);
                if (better_split(gain, f, thr, best)) best = {f, thr, gain, true};
            }
        }
        return best;
    }

    const TrainingView& data_;
    const ForestParams& params_;
    Rng rng_;
    std::vector<double>& importance_;
    double weight_pos_;
    std::size_t mtry_;
    double root_weight_ = 1.0;
    std::vector<std::uint32_t> samples_;
    std::vector<std::uint32_t> features_;
    std::vector<TreeNode> nodes_;
    std::vector<std::pair<double, bool>> buffer_;
};

} // namespace detail

/// Trains a forest. Tree t uses the RNG stream seeded with params.seed + t,
/// so the result is bit-identical for a given (matrix, params) regardless of `workers`.
inline ForestModel train_forest(const FeatureMatrix& fm, const ForestParams& params, std::size_t workers = 1) {
    params.validate();
    if (fm.rows() < 2) throw TrainingError("training needs at least 2 rows");
    if (fm.cols() == 0) throw TrainingError("training needs at least 1 feature");
    if (fm.rows() > std::numeric_limits<std::uint32_t>::max()) throw TrainingError("too many rows");
    for (double v : fm.values)
        if (!std::isfinite(v)) throw ValidationError("feature matrix contains NaN/Inf");
    const auto n_pos = static_cast<std::size_t>(std::count(fm.labels.begin(), fm.labels.end(), BinaryLabel::Flaring));
    if (n_pos == 0 || n_pos == fm.rows()) throw TrainingError("training data contains a single class");

    detail::TrainingView view;
    view.n_rows = fm.rows();
    view.n_cols = fm.cols();
    view.columns.resize(view.n_rows * view.n_cols);
    for (std::size_t i = 0; i < view.n_rows; ++i)
        for (std::size_t j = 0; j < view.n_cols; ++j) view.columns[j * view.n_rows + i] = fm.at(i, j);
    for (auto l : fm.labels) view.positive.push_back(l == BinaryLabel::Flaring ? 1 : 0);

    ForestModel model;
    model.params = params;
    model.feature_ids = fm.ids();
    model.trees.resize(params.n_trees);
    std::vector<std::vector<double>> per_tree(params.n_trees, std::vector<double>(fm.cols(), 0.0));
    parallel_for(params.n_trees, workers, [&](std::size_t t) {
        const std::uint64_t seed = params.seed + t;
        detail::TreeBuilder builder(view, params, seed, per_tree[t]);
        std::vector<std::uint32_t> samples(view.n_rows);
        if (params.bootstrap_rows) {
            Rng draw(mix64(seed));
            for (auto& s : samples) s = static_cast<std::uint32_t>(draw.below(view.n_rows));
        } else {
            std::iota(samples.begin(), samples.end(), 0u);
        }
        model.trees[t] = builder.build(std::move(samples));
    });

    model.importances.assign(fm.cols(), 0.0);
    for (const auto& imp : per_tree)
        for (std::size_t j = 0; j < imp.size(); ++j) model.importances[j] += imp[j];
    const double total = std::accumulate(model.importances.begin(), model.importances.end(), 0.0);
    if (total > 0.0)
        for (auto& v : model.importances) v /= total;
    return model;
}

struct Prediction {
    BinaryLabel label = BinaryLabel::NonFlaring;
    double score = 0.0;
};

/// Mean positive-class leaf score over trees; Flaring iff score >= model.threshold.
inline Prediction predict(const ForestModel& model, std::span<const double> row) {
    if (row.size() != model.feature_ids.size())
        throw ArgumentError("row has " + std::to_string(row.size()) + " features, model expects " +
                            std::to_string(model.feature_ids.size()));
    for (double v : row)
        if (!std::isfinite(v)) throw ArgumentError("row contains NaN/Inf");
    double sum = 0.0;
    for (const auto& t : model.trees) sum += t.positive_score(row);
    const double score = sum / static_cast<double>(model.trees.size());
    return {score >= model.threshold ? BinaryLabel::Flaring : BinaryLabel::NonFlaring, score};
}

struct InstancePrediction {
    std::string instance_id;
    BinaryLabel label;
    double score;
};

/// Row-wise predict. Columns are matched to the model by canonical id.
inline std::vector<InstancePrediction> predict_dataset(const ForestModel& model, const FeatureMatrix& fm) {
    std::vector<InstancePrediction> out;
    if (fm.rows() == 0) return out;
    const auto ids = fm.ids();
    FeatureMatrix aligned;
    const FeatureMatrix* source = &fm;
    if (ids != model.feature_ids) {
        std::set<std::string> want(model.feature_ids.begin(), model.feature_ids.end());
        if (want.size() != model.feature_ids.size()) throw ArgumentError("model has duplicate feature ids");
        aligned = select_columns(fm, want);
        if (aligned.ids() != model.feature_ids)
            throw ArgumentError("feature matrix columns cannot be aligned with the model");
        source = &aligned;
    }
    out.reserve(fm.rows());
    for (std::size_t i = 0; i < fm.rows(); ++i) {
        const auto p = predict(model, source->row(i));
        out.push_back({fm.instance_ids[i], p.label, p.score});
    }
    return out;
}

inline nlohmann::json to_json(const ForestModel& m) {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : m.trees) {
        nlohmann::json feature = nlohmann::json::array(), threshold = nlohmann::json::array(),
                       left = nlohmann::json::array(), right = nlohmann::json::array(),
                       score = nlohmann::json::array(), gain = nlohmann::json::array(),
                       weight = nlohmann::json::array();
        for (const auto& n : t.nodes()) {
            feature.push_back(n.feature);
            threshold.push_back(n.threshold);
            left.push_back(n.left);
            right.push_back(n.right);
            score.push_back(n.positive_score);
            gain.push_back(n.gain);
            weight.push_back(n.weight);
        }
        trees.push_back({{"feature", feature}, {"threshold", threshold}, {"left", left}, {"right", right},
                         {"score", score}, {"gain", gain}, {"weight", weight}});
    }
    nlohmann::json j;
    j["format"] = "slimtsf-forest/1";
    j["params"] = to_json(m.params);
    j["features"] = m.feature_ids;
    j["importances"] = m.importances;
    j["threshold"] = m.threshold;
    j["trees"] = trees;
    return j;
}

inline ForestModel forest_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "slimtsf-forest/1") throw ValidationError("not a slimtsf forest bundle");
    ForestModel m;
    m.params = forest_params_from_json(j.at("params"));
    m.feature_ids = j.at("features").get<std::vector<std::string>>();
    m.importances = j.at("importances").get<std::vector<double>>();
    m.threshold = j.at("threshold").get<double>();
    if (m.importances.size() != m.feature_ids.size()) throw ValidationError("importances and features differ in length");
    for (const auto& t : j.at("trees")) {
        const auto feature = t.at("feature").get<std::vector<std::int32_t>>();
        const auto threshold = t.at("threshold").get<std::vector<double>>();
        const auto left = t.at("left").get<std::vector<std::uint32_t>>();
        const auto right = t.at("right").get<std::vector<std::uint32_t>>();
        const auto score = t.at("score").get<std::vector<double>>();
        const auto gain = t.at("gain").get<std::vector<double>>();
        const auto weight = t.at("weight").get<std::vector<double>>();
        const std::size_t n = feature.size();
        if (n == 0 || threshold.size() != n || left.size() != n || right.size() != n || score.size() != n ||
            gain.size() != n || weight.size() != n)
            throw ValidationError("malformed tree arrays");
        std::vector<TreeNode> nodes(n);
        for (std::size_t i = 0; i < n; ++i) {
            nodes[i] = {feature[i], threshold[i], left[i], right[i], score[i], gain[i], weight[i]};
            if (feature[i] >= 0 && (static_cast<std::size_t>(feature[i]) >= m.feature_ids.size() || left[i] >= n ||
                                    right[i] >= n || left[i] <= i || right[i] <= i))
                throw ValidationError("malformed tree node");
        }
        m.trees.emplace_back(std::move(nodes));
    }
    if (m.trees.empty()) throw ValidationError("model has no trees");
    return m;
}

inline void save_forest(const ForestModel& m, const std::filesystem::path& path) {
    io::write_file_atomic(path, to_json(m).dump() + "\n");
}

inline ForestModel load_forest(const std::filesystem::path& path) {
    return forest_from_json(nlohmann::json::parse(io::read_file(path)));
}

} // namespace slimtsf
