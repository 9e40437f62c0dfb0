#pragma once

// Random forest over chi-squared-selected features.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "footlab/binary_io.hpp"
#include "footlab/common.hpp"
#include "footlab/features.hpp"

namespace footlab {

struct ForestParams {
    int n_trees{100};
    std::optional<int> max_depth{};
    int min_samples_split{2};
    std::optional<int> features_per_split{};  ///< default floor(sqrt(selected count))
    std::uint64_t seed{0};
    int threads{0};  ///< 0 = hardware concurrency; does not affect the result
};

struct ActivityPrediction {
    std::string player_id;
    int period_id{1};
    WindowRef window{};
    std::string predicted_class;
    std::size_t class_index{0};
    std::vector<double> vote_fractions;  ///< aligned with the model's class list
};

/// Anything that predicts an activity for a feature vector.
template <class M>
concept ActivityClassifier = requires(const M& m, const FeatureVector& v) {
    { m.predict(v) } -> std::same_as<ActivityPrediction>;
};

struct TreeNode {
    std::int32_t feature{-1};  ///< index into the full feature vector; -1 for a leaf
    double threshold{0};       ///< x[feature] <= threshold goes left
    std::uint32_t left{0}, right{0};
    std::vector<double> histogram;  ///< leaf only: bootstrap weight per class
    std::uint32_t majority{0};
};

struct DecisionTree {
    std::vector<TreeNode> nodes;  ///< preorder, root at 0

    const TreeNode& leaf_for(std::span<const double> x) const {
        std::uint32_t i = 0;
        while (nodes[i].feature >= 0) i = x[static_cast<std::size_t>(nodes[i].feature)] <= nodes[i].threshold ? nodes[i].left : nodes[i].right;
        return nodes[i];
    }
};

namespace detail {

inline std::uint32_t argmax_lowest(std::span<const double> v) {
    std::uint32_t best = 0;
    for (std::uint32_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

/// Grows one tree on a weighted (bootstrap-count) sample set.
class TreeBuilder {
public:
    TreeBuilder(const std::vector<std::vector<double>>& columns, const std::vector<std::size_t>& feature_ids,
                const std::vector<std::uint32_t>& labels, std::size_t n_classes, const ForestParams& params,
                std::size_t features_per_split)
        : cols_(columns), feature_ids_(feature_ids), labels_(labels), n_classes_(n_classes), params_(params),
          mtry_(features_per_split) {}

    DecisionTree grow(std::uint64_t tree_seed) {
        std::mt19937_64 rng(tree_seed);
        const std::size_t N = labels_.size();
        std::vector<double> weight(N, 0.0);
        for (std::size_t i = 0; i < N; ++i) weight[uniform_below(rng, N)] += 1.0;
        std::vector<std::uint32_t> members;
        for (std::uint32_t i = 0; i < N; ++i)
            if (weight[i] > 0) members.push_back(i);
        weight_ = std::move(weight);
        tree_ = {};
        build(members, 0, rng);
        return std::move(tree_);
    }

private:
    struct Split {
        std::size_t column{0};
        double threshold{0};
        double score{-std::numeric_limits<double>::infinity()};  ///< weighted impurity decrease
        bool valid{false};
    };

    std::vector<double> histogram(const std::vector<std::uint32_t>& members) const {
        std::vector<double> h(n_classes_, 0.0);
        for (auto i : members) h[labels_[i]] += weight_[i];
        return h;
    }

    static double gini_mass(std::span<const double> h, double w) {
        // w * gini = w - sum(h^2)/w
        double s = 0;
        for (double c : h) s += c * c;
        return w - s / w;
    }

    Split best_on_column(const std::vector<std::uint32_t>& members, std::size_t col, std::span<const double> parent,
                         double w) const {
        const auto& x = cols_[col];
        std::vector<std::uint32_t> order(members);
        std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
            return x[a] < x[b] || (x[a] == x[b] && a < b);
        });
        Split best;
        best.column = col;
        if (x[order.front()] == x[order.back()]) return best;
        const double parent_mass = gini_mass(parent, w);
        std::vector<double> left(n_classes_, 0.0), right(parent.begin(), parent.end());
        double wl = 0;
        for (std::size_t p = 0; p + 1 < order.size(); ++p) {
            const auto i = order[p];
            left[labels_[i]] += weight_[i];
            right[labels_[i]] -= weight_[i];
            wl += weight_[i];
            const double a = x[i], b = x[order[p + 1]];
            if (a == b) continue;
            const double decrease = parent_mass - gini_mass(left, wl) - gini_mass(right, w - wl);
            if (!best.valid || decrease > best.score) {
                double mid = a + (b - a) / 2;
                if (!(mid < b)) mid = a;
                best.valid = true;
                best.score = decrease;
                best.threshold = mid;
            }
        }
        return best;
    }

    std::uint32_t build(const std::vector<std::uint32_t>& members, int depth, std::mt19937_64& rng) {
        const auto hist = histogram(members);
        const double w = std::accumulate(hist.begin(), hist.end(), 0.0);
        const auto id = static_cast<std::uint32_t>(tree_.nodes.size());
        tree_.nodes.emplace_back();

        const bool pure = std::count_if(hist.begin(), hist.end(), [](double c) { return c > 0; }) <= 1;
        const bool too_small = w < static_cast<double>(params_.min_samples_split);
        const bool too_deep = params_.max_depth && depth >= *params_.max_depth;
        std::optional<Split> split;
        if (!pure && !too_small && !too_deep) split = choose_split(members, hist, w, rng);

        if (!split) {
            auto& leaf = tree_.nodes[id];
            leaf.histogram = hist;
            leaf.majority = argmax_lowest(hist);
            return id;
        }
        std::vector<std::uint32_t> lhs, rhs;
        const auto& x = cols_[split->column];
        for (auto i : members) (x[i] <= split->threshold ? lhs : rhs).push_back(i);
        const auto l = build(lhs, depth + 1, rng);
        const auto r = build(rhs, depth + 1, rng);
        auto& node = tree_.nodes[id];
        node.feature = static_cast<std::int32_t>(feature_ids_[split->column]);
        node.threshold = split->threshold;
        node.left = l;
        node.right = r;
        return id;
    }

    /// Candidate columns come from a per-node Fisher-Yates permutation. If the
    /// first `mtry` are all constant on the node, further columns are tried in
    /// permutation order until one can split.
    std::optional<Split> choose_split(const std::vector<std::uint32_t>& members, const std::vector<double>& hist,
                                      double w, std::mt19937_64& rng) const {
        const std::size_t d = cols_.size();
        std::vector<std::size_t> perm(d);
        std::iota(perm.begin(), perm.end(), 0);
        for (std::size_t i = 0; i + 1 < d; ++i) std::swap(perm[i], perm[i + uniform_below(rng, d - i)]);

        std::size_t taken = std::min(mtry_, d);
        for (;;) {
            std::vector<std::size_t> cand(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(taken));
            std::sort(cand.begin(), cand.end(),
                      [&](std::size_t a, std::size_t b) { return feature_ids_[a] < feature_ids_[b]; });
            Split best;
            for (auto c : cand) {
                const auto s = best_on_column(members, c, hist, w);
                if (s.valid && (!best.valid || s.score > best.score)) best = s;
            }
            if (best.valid) return best;
            if (taken == d) return std::nullopt;
            ++taken;
        }
    }

    const std::vector<std::vector<double>>& cols_;
    const std::vector<std::size_t>& feature_ids_;
    const std::vector<std::uint32_t>& labels_;
    std::size_t n_classes_;
    const ForestParams& params_;
    std::size_t mtry_;
    std::vector<double> weight_;
    DecisionTree tree_;
};

}  // namespace detail

class ForestModel;
inline ForestModel train_forest(std::span<const FeatureVector> vectors, const FeatureSelection& selection,
                                const ForestParams& params);
inline std::vector<std::uint8_t> serialize(const ForestModel& m);
inline ForestModel deserialize_forest(const std::vector<std::uint8_t>& bytes);

/// Immutable once trained; safe to share across concurrent predict calls.
class ForestModel {
public:
    ForestModel() = default;

    const std::vector<std::string>& class_list() const { return classes_; }
    const FeatureSelection& selection() const { return selection_; }
    const std::vector<DecisionTree>& trees() const { return trees_; }
    std::size_t arity() const { return arity_; }
    const ForestParams& params() const { return params_; }

    ActivityPrediction predict(const FeatureVector& v) const {
        if (v.values.size() != arity_)
            throw ArgumentError("predict: vector has " + std::to_string(v.values.size()) + " features, model expects " +
                                std::to_string(arity_));
        std::vector<double> votes(classes_.size(), 0.0);
        for (const auto& t : trees_) votes[t.leaf_for(v.values).majority] += 1.0;
        ActivityPrediction p;
        p.player_id = v.subject;
        p.period_id = v.period_id;
        p.window = v.window;
        for (auto& x : votes) x /= static_cast<double>(trees_.size());
        p.class_index = detail::argmax_lowest(votes);
        p.predicted_class = classes_[p.class_index];
        p.vote_fractions = std::move(votes);
        return p;
    }

    friend ForestModel train_forest(std::span<const FeatureVector>, const FeatureSelection&, const ForestParams&);
    friend std::vector<std::uint8_t> serialize(const ForestModel&);
    friend ForestModel deserialize_forest(const std::vector<std::uint8_t>&);

private:
    std::vector<std::string> classes_;
    FeatureSelection selection_;
    ForestParams params_;
    std::size_t arity_{0};
    std::vector<DecisionTree> trees_;
};

inline ForestModel train_forest(std::span<const FeatureVector> vectors, const FeatureSelection& selection,
                                const ForestParams& params) {
    if (vectors.empty()) throw ArgumentError("train: no training vectors");
    if (params.n_trees < 1) throw ArgumentError("train: n_trees must be >= 1");
    if (params.min_samples_split < 2) throw ArgumentError("train: min_samples_split must be >= 2");
    if (selection.selected.empty()) throw ArgumentError("train: empty feature selection");
    const std::size_t arity = vectors.front().values.size();

    std::vector<std::string> classes;
    for (const auto& v : vectors) {
        if (!v.label) throw ArgumentError("train: unlabeled vector");
        if (v.values.size() != arity) throw ArgumentError("train: arity mismatch");
        classes.push_back(*v.label);
    }
    std::sort(classes.begin(), classes.end(), [](const auto& a, const auto& b) { return text::natural_less(a, b); });
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    if (classes.size() < 2) throw ArgumentError("train: need at least 2 classes");
    for (auto f : selection.selected)
        if (f >= arity) throw ArgumentError("train: selected feature " + std::to_string(f) + " out of range");

    const std::size_t d = selection.selected.size();
    const std::size_t mtry = params.features_per_split
                                 ? static_cast<std::size_t>(*params.features_per_split)
                                 : std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(double(d)))));
    if (mtry < 1 || mtry > d) throw ArgumentError("train: features_per_split must be in [1, selected count]");

    std::map<std::string, std::uint32_t> cls_idx;
    for (std::uint32_t i = 0; i < classes.size(); ++i) cls_idx[classes[i]] = i;
    std::vector<std::uint32_t> labels;
    labels.reserve(vectors.size());
    for (const auto& v : vectors) labels.push_back(cls_idx.at(*v.label));
    std::vector<std::vector<double>> columns(d, std::vector<double>(vectors.size()));
    for (std::size_t j = 0; j < d; ++j)
        for (std::size_t i = 0; i < vectors.size(); ++i) columns[j][i] = vectors[i].values[selection.selected[j]];

    ForestModel model;
    model.classes_ = classes;
    model.selection_ = selection;
    model.params_ = params;
    model.params_.features_per_split = static_cast<int>(mtry);
    model.arity_ = arity;
    model.trees_.resize(static_cast<std::size_t>(params.n_trees));

    const auto grow_range = [&](std::size_t begin, std::size_t end) {
        detail::TreeBuilder builder(columns, selection.selected, labels, classes.size(), model.params_, mtry);
        for (std::size_t t = begin; t < end; ++t) model.trees_[t] = builder.grow(mix_seed(params.seed, t));
    };
    std::size_t workers = params.threads > 0 ? static_cast<std::size_t>(params.threads)
                                             : std::max(1u, std::thread::hardware_concurrency());
    workers = std::min(workers, model.trees_.size());
    if (workers <= 1) {
        grow_range(0, model.trees_.size());
    } else {
        std::vector<std::jthread> pool;
        const std::size_t n = model.trees_.size();
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(grow_range, n * w / workers, n * (w + 1) / workers);
    }
    return model;
}

// ------------------------------------------------------------ model file
//
// "FLF1" | u16 version
// u32 class count, then each class name (u32 length + bytes)
// u32 arity
// u32 selected count, u32 indices...; u32 score count, f64 scores...
// u32 n_trees, i32 max_depth (-1 = none), u32 min_samples_split,
//   u32 features_per_split, u64 seed
// u32 tree count; per tree u32 node count, then per node:
//   u8 0 (split): u32 feature, f64 threshold, u32 left, u32 right
//   u8 1 (leaf):  f64 weight per class
// All integers and doubles little-endian.

inline constexpr std::uint16_t kModelVersion = 1;

inline std::vector<std::uint8_t> serialize(const ForestModel& m) {
    ByteWriter w;
    w.bytes("FLF1");
    w.u16(kModelVersion);
    w.u32(static_cast<std::uint32_t>(m.classes_.size()));
    for (const auto& c : m.classes_) w.str(c);
    w.u32(static_cast<std::uint32_t>(m.arity_));
    w.u32(static_cast<std::uint32_t>(m.selection_.selected.size()));
    for (auto f : m.selection_.selected) w.u32(static_cast<std::uint32_t>(f));
    w.u32(static_cast<std::uint32_t>(m.selection_.scores.size()));
    for (double s : m.selection_.scores) w.f64(s);
    w.u32(static_cast<std::uint32_t>(m.params_.n_trees));
    w.u32(static_cast<std::uint32_t>(m.params_.max_depth.value_or(-1)));
    w.u32(static_cast<std::uint32_t>(m.params_.min_samples_split));
    w.u32(static_cast<std::uint32_t>(m.params_.features_per_split.value_or(0)));
    w.u64(m.params_.seed);
    w.u32(static_cast<std::uint32_t>(m.trees_.size()));
    for (const auto& t : m.trees_) {
        w.u32(static_cast<std::uint32_t>(t.nodes.size()));
        for (const auto& n : t.nodes) {
            if (n.feature >= 0) {
                w.u8(0);
                w.u32(static_cast<std::uint32_t>(n.feature));
                w.f64(n.threshold);
                w.u32(n.left);
                w.u32(n.right);
            } else {
                w.u8(1);
                for (double c : n.histogram) w.f64(c);
            }
        }
    }
    return std::move(w).take();
}

inline ForestModel deserialize_forest(const std::vector<std::uint8_t>& bytes) {
    if (bytes.empty()) throw FormatError("empty model payload at offset 0");
    ByteReader r(bytes);
    if (r.bytes(4) != "FLF1") throw FormatError("bad magic at offset 0");
    if (const auto v = r.u16(); v != kModelVersion) r.fail("unsupported model version " + std::to_string(v));
    ForestModel m;
    const auto n_classes = r.u32();
    if (n_classes < 2 || n_classes > bytes.size()) r.fail("bad class count");
    for (std::uint32_t i = 0; i < n_classes; ++i) m.classes_.push_back(r.str());
    m.arity_ = r.u32();
    const auto k = r.u32();
    if (k == 0 || k > m.arity_) r.fail("bad selection size");
    for (std::uint32_t i = 0; i < k; ++i) {
        const auto f = r.u32();
        if (f >= m.arity_) r.fail("selected feature out of range");
        m.selection_.selected.push_back(f);
    }
    const auto n_scores = r.u32();
    if (n_scores > bytes.size()) r.fail("bad score count");
    for (std::uint32_t i = 0; i < n_scores; ++i) m.selection_.scores.push_back(r.f64());
    m.params_.n_trees = static_cast<int>(r.u32());
    if (const auto depth = static_cast<std::int32_t>(r.u32()); depth >= 0) m.params_.max_depth = depth;
    m.params_.min_samples_split = static_cast<int>(r.u32());
    if (const auto fps = r.u32(); fps > 0) m.params_.features_per_split = static_cast<int>(fps);
    m.params_.seed = r.u64();

    std::vector<bool> allowed(m.arity_, false);
    for (auto f : m.selection_.selected) allowed[f] = true;
    const auto n_trees = r.u32();
    if (n_trees == 0 || n_trees > bytes.size()) r.fail("bad tree count");
    for (std::uint32_t t = 0; t < n_trees; ++t) {
        DecisionTree tree;
        const auto n_nodes = r.u32();
        if (n_nodes == 0 || n_nodes > bytes.size()) r.fail("bad node count");
        tree.nodes.resize(n_nodes);
        for (std::uint32_t i = 0; i < n_nodes; ++i) {
            auto& n = tree.nodes[i];
            const auto tag = r.u8();
            if (tag == 0) {
                const auto f = r.u32();
                if (f >= m.arity_ || !allowed[f]) r.fail("split feature not in selection");
                n.feature = static_cast<std::int32_t>(f);
                n.threshold = r.f64();
                n.left = r.u32();
                n.right = r.u32();
                if (n.left <= i || n.right <= i || n.left >= n_nodes || n.right >= n_nodes)
                    r.fail("bad child index");
            } else if (tag == 1) {
                n.histogram.resize(n_classes);
                double sum = 0;
                for (auto& c : n.histogram) {
                    c = r.f64();
                    if (!(c >= 0)) r.fail("negative leaf weight");
                    sum += c;
                }
                if (!(sum > 0)) r.fail("empty leaf histogram");
                n.majority = detail::argmax_lowest(n.histogram);
            } else {
                r.fail("bad node tag");
            }
        }
        m.trees_.push_back(std::move(tree));
    }
    if (!r.at_end()) r.fail("trailing bytes");
    return m;
}

}  // namespace footlab
