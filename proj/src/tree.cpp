#include "tree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "common.hpp"
#include "rng.hpp"

#include <nlohmann/json.hpp>

namespace flowtune {

namespace {

constexpr double kMinGain = 1e-12;

struct ClassStats {
    std::vector<double> counts;
    double total = 0.0;

    void add(int label, double w = 1.0) {
        counts[static_cast<std::size_t>(label)] += w;
        total += w;
    }
    void remove(int label, double w = 1.0) {
        counts[static_cast<std::size_t>(label)] -= w;
        total -= w;
    }
};

double impurity(const ClassStats& s, SplitCriterion crit) {
    if (s.total <= 0.0) return 0.0;
    double out = crit == SplitCriterion::kGini ? 1.0 : 0.0;
    for (double c : s.counts) {
        if (c <= 0.0) continue;
        const double p = c / s.total;
        if (crit == SplitCriterion::kGini) {
            out -= p * p;
        } else {
            out -= p * std::log2(p);
        }
    }
    return out;
}

struct MomentStats {
    double sum = 0.0;
    double sum_sq = 0.0;
    double n = 0.0;

    void add(double y) {
        sum += y;
        sum_sq += y * y;
        n += 1.0;
    }
    void remove(double y) {
        sum -= y;
        sum_sq -= y * y;
        n -= 1.0;
    }
    double variance() const {
        if (n <= 0.0) return 0.0;
        const double mean = sum / n;
        return std::max(0.0, sum_sq / n - mean * mean);
    }
};

struct GradStats {
    double g = 0.0;
    double h = 0.0;

    void add(double gi, double hi) {
        g += gi;
        h += hi;
    }
    void remove(double gi, double hi) {
        g -= gi;
        h -= hi;
    }
};

double newton_term(double g, double h, double lambda, double alpha) {
    const double t = std::max(std::abs(g) - alpha, 0.0);
    return t * t / (h + lambda);
}

double newton_weight(double g, double h, double lambda, double alpha) {
    const double t = std::copysign(std::max(std::abs(g) - alpha, 0.0), g);
    return -t / (h + lambda);
}

class TreeBuilder {
public:
    TreeBuilder(const ColumnMatrix& x, const TreeParams& params, const std::vector<int>* labels,
                int n_classes, const std::vector<double>* targets, const std::vector<double>* grad,
                const std::vector<double>* hess)
        : x_(x),
          params_(params),
          labels_(labels),
          n_classes_(n_classes),
          targets_(targets),
          grad_(grad),
          hess_(hess),
          rng_(mix_seed(params.seed, 0x7ee5)),
          side_(x.n_rows, 0) {}

    TreeModel build(std::vector<std::uint32_t> row_set, std::vector<std::uint32_t> col_set) {
        if (row_set.empty()) {
            row_set.resize(x_.n_rows);
            std::iota(row_set.begin(), row_set.end(), 0);
        }
        if (col_set.empty()) {
            col_set.resize(x_.n_cols);
            std::iota(col_set.begin(), col_set.end(), 0);
        }
        col_set_ = std::move(col_set);
        if (row_set.empty()) throw ValueError("tree: empty training set");

        n_root_ = row_set.size();
        min_split_ = std::max<std::size_t>(
            2, static_cast<std::size_t>(
                   std::ceil(params_.min_samples_split_frac * static_cast<double>(n_root_))));

        // One sorted index list per candidate column, ties broken by row id.
        std::vector<std::vector<std::uint32_t>> lists(col_set_.size());
        for (std::size_t ci = 0; ci < col_set_.size(); ++ci) {
            lists[ci] = row_set;
            const double* col = &x_.data[static_cast<std::size_t>(col_set_[ci]) * x_.n_rows];
            std::sort(lists[ci].begin(), lists[ci].end(),
                      [col](std::uint32_t a, std::uint32_t b) {
                          if (col[a] != col[b]) return col[a] < col[b];
                          return a < b;
                      });
        }

        model_.classifier = labels_ != nullptr;
        model_.n_classes = n_classes_;
        model_.n_train_rows = n_root_;
        build_node(lists, 0);
        return std::move(model_);
    }

private:
    struct SplitChoice {
        bool found = false;
        std::size_t col_pos = 0;  // position in col_set_
        double threshold = 0.0;
        double gain = 0.0;  // total decrease (count-weighted) or Newton gain
    };

    int build_node(std::vector<std::vector<std::uint32_t>>& lists, int depth) {
        const auto& rows = lists[0];
        const std::size_t m = rows.size();
        const int node_id = static_cast<int>(model_.nodes.size());
        model_.nodes.emplace_back();
        model_.nodes.back().n_rows = m;
        model_.depth = std::max(model_.depth, depth);

        SplitChoice split;
        const bool can_split = m >= min_split_ && m >= 2 * params_.min_samples_leaf &&
                               (params_.max_depth < 0 || depth < params_.max_depth);
        if (can_split) split = find_split(lists);

        if (!split.found) {
            model_.nodes[static_cast<std::size_t>(node_id)].value = leaf_value(rows);
            return node_id;
        }

        const std::uint32_t col = col_set_[split.col_pos];
        const double* colv = &x_.data[static_cast<std::size_t>(col) * x_.n_rows];
        for (std::uint32_t r : rows) side_[r] = colv[r] <= split.threshold ? 1 : 0;

        std::vector<std::vector<std::uint32_t>> left(lists.size()), right(lists.size());
        for (std::size_t ci = 0; ci < lists.size(); ++ci) {
            left[ci].reserve(m / 2);
            right[ci].reserve(m / 2);
            for (std::uint32_t r : lists[ci]) {
                (side_[r] ? left[ci] : right[ci]).push_back(r);
            }
            lists[ci].clear();
            lists[ci].shrink_to_fit();
        }

        const int left_id = build_node(left, depth + 1);
        const int right_id = build_node(right, depth + 1);
        TreeNode& node = model_.nodes[static_cast<std::size_t>(node_id)];
        node.feature = static_cast<int>(col);
        node.threshold = split.threshold;
        node.gain = split.gain;
        node.left = left_id;
        node.right = right_id;
        return node_id;
    }

    std::vector<double> leaf_value(const std::vector<std::uint32_t>& rows) const {
        if (labels_) {
            std::vector<double> probs(static_cast<std::size_t>(n_classes_), 0.0);
            for (std::uint32_t r : rows) probs[static_cast<std::size_t>((*labels_)[r])] += 1.0;
            for (double& p : probs) p /= static_cast<double>(rows.size());
            return probs;
        }
        if (targets_) {
            double sum = 0.0;
            for (std::uint32_t r : rows) sum += (*targets_)[r];
            return {sum / static_cast<double>(rows.size())};
        }
        GradStats gs;
        for (std::uint32_t r : rows) gs.add((*grad_)[r], (*hess_)[r]);
        return {newton_weight(gs.g, gs.h, params_.lambda, params_.alpha)};
    }

    SplitChoice find_split(const std::vector<std::vector<std::uint32_t>>& lists) {
        return params_.splitter == Splitter::kBest ? find_best_split(lists)
                                                   : find_random_split(lists);
    }

    // Exact scan: every boundary between distinct consecutive values.
    SplitChoice find_best_split(const std::vector<std::vector<std::uint32_t>>& lists) {
        SplitChoice best;
        for (std::size_t ci = 0; ci < lists.size(); ++ci) {
            const double* colv = &x_.data[static_cast<std::size_t>(col_set_[ci]) * x_.n_rows];
            scan_column(lists[ci], colv, ci, best);
        }
        return best;
    }

    // Extra-trees style: one uniform threshold per feature, best feature wins.
    SplitChoice find_random_split(const std::vector<std::vector<std::uint32_t>>& lists) {
        SplitChoice best;
        for (std::size_t ci = 0; ci < lists.size(); ++ci) {
            const auto& order = lists[ci];
            const double* colv = &x_.data[static_cast<std::size_t>(col_set_[ci]) * x_.n_rows];
            const double lo = colv[order.front()];
            const double hi = colv[order.back()];
            if (lo >= hi) continue;
            const double threshold = rng_.uniform(lo, hi);
            evaluate_threshold(order, colv, ci, threshold, best);
        }
        return best;
    }

    void scan_column(const std::vector<std::uint32_t>& order, const double* colv, std::size_t ci,
                     SplitChoice& best) {
        const std::size_t m = order.size();
        switch (criterion_kind()) {
            case 0: {  // classification
                ClassStats left{std::vector<double>(static_cast<std::size_t>(n_classes_), 0.0), 0.0};
                ClassStats total{std::vector<double>(static_cast<std::size_t>(n_classes_), 0.0), 0.0};
                for (std::uint32_t r : order) total.add((*labels_)[r]);
                const double imp_parent = impurity(total, params_.criterion);
                ClassStats right = total;
                for (std::size_t i = 0; i + 1 < m; ++i) {
                    const int lab = (*labels_)[order[i]];
                    left.add(lab);
                    right.remove(lab);
                    if (colv[order[i]] == colv[order[i + 1]]) continue;
                    if (!leaf_sizes_ok(i + 1, m - i - 1)) continue;
                    const double gain =
                        total.total * imp_parent -
                        left.total * impurity(left, params_.criterion) -
                        right.total * impurity(right, params_.criterion);
                    consider(gain, ci, 0.5 * (colv[order[i]] + colv[order[i + 1]]), best);
                }
                break;
            }
            case 1: {  // mse
                MomentStats left, total;
                for (std::uint32_t r : order) total.add((*targets_)[r]);
                const double imp_parent = total.variance();
                MomentStats right = total;
                for (std::size_t i = 0; i + 1 < m; ++i) {
                    const double y = (*targets_)[order[i]];
                    left.add(y);
                    right.remove(y);
                    if (colv[order[i]] == colv[order[i + 1]]) continue;
                    if (!leaf_sizes_ok(i + 1, m - i - 1)) continue;
                    const double gain = total.n * imp_parent - left.n * left.variance() -
                                        right.n * right.variance();
                    consider(gain, ci, 0.5 * (colv[order[i]] + colv[order[i + 1]]), best);
                }
                break;
            }
            case 2: {  // newton
                GradStats left, total;
                for (std::uint32_t r : order) total.add((*grad_)[r], (*hess_)[r]);
                const double parent_term =
                    newton_term(total.g, total.h, params_.lambda, params_.alpha);
                GradStats right = total;
                for (std::size_t i = 0; i + 1 < m; ++i) {
                    left.add((*grad_)[order[i]], (*hess_)[order[i]]);
                    right.remove((*grad_)[order[i]], (*hess_)[order[i]]);
                    if (colv[order[i]] == colv[order[i + 1]]) continue;
                    if (!leaf_sizes_ok(i + 1, m - i - 1)) continue;
                    const double gain =
                        0.5 * (newton_term(left.g, left.h, params_.lambda, params_.alpha) +
                               newton_term(right.g, right.h, params_.lambda, params_.alpha) -
                               parent_term);
                    consider(gain, ci, 0.5 * (colv[order[i]] + colv[order[i + 1]]), best);
                }
                break;
            }
        }
    }

    void evaluate_threshold(const std::vector<std::uint32_t>& order, const double* colv,
                            std::size_t ci, double threshold, SplitChoice& best) {
        // order is sorted, so the left block is a prefix.
        std::size_t n_left = 0;
        while (n_left < order.size() && colv[order[n_left]] <= threshold) ++n_left;
        if (!leaf_sizes_ok(n_left, order.size() - n_left)) return;
        switch (criterion_kind()) {
            case 0: {
                ClassStats left{std::vector<double>(static_cast<std::size_t>(n_classes_), 0.0), 0.0};
                ClassStats total{std::vector<double>(static_cast<std::size_t>(n_classes_), 0.0), 0.0};
                for (std::size_t i = 0; i < order.size(); ++i) {
                    total.add((*labels_)[order[i]]);
                    if (i < n_left) left.add((*labels_)[order[i]]);
                }
                ClassStats right = total;
                for (std::size_t c = 0; c < right.counts.size(); ++c) right.counts[c] -= left.counts[c];
                right.total -= left.total;
                const double gain = total.total * impurity(total, params_.criterion) -
                                    left.total * impurity(left, params_.criterion) -
                                    right.total * impurity(right, params_.criterion);
                consider(gain, ci, threshold, best);
                break;
            }
            case 1: {
                MomentStats left, total;
                for (std::size_t i = 0; i < order.size(); ++i) {
                    total.add((*targets_)[order[i]]);
                    if (i < n_left) left.add((*targets_)[order[i]]);
                }
                MomentStats right = total;
                for (std::size_t i = 0; i < n_left; ++i) right.remove((*targets_)[order[i]]);
                const double gain =
                    total.n * total.variance() - left.n * left.variance() - right.n * right.variance();
                consider(gain, ci, threshold, best);
                break;
            }
            case 2: {
                GradStats left, total;
                for (std::size_t i = 0; i < order.size(); ++i) {
                    total.add((*grad_)[order[i]], (*hess_)[order[i]]);
                    if (i < n_left) left.add((*grad_)[order[i]], (*hess_)[order[i]]);
                }
                GradStats right{total.g - left.g, total.h - left.h};
                const double gain =
                    0.5 * (newton_term(left.g, left.h, params_.lambda, params_.alpha) +
                           newton_term(right.g, right.h, params_.lambda, params_.alpha) -
                           newton_term(total.g, total.h, params_.lambda, params_.alpha));
                consider(gain, ci, threshold, best);
                break;
            }
        }
    }

    bool leaf_sizes_ok(std::size_t n_left, std::size_t n_right) const {
        return n_left >= params_.min_samples_leaf && n_right >= params_.min_samples_leaf;
    }

    void consider(double gain, std::size_t ci, double threshold, SplitChoice& best) const {
        if (gain <= kMinGain) return;
        if (!best.found || gain > best.gain) {
            best.found = true;
            best.col_pos = ci;
            best.threshold = threshold;
            best.gain = gain;
        }
    }

    int criterion_kind() const {
        switch (params_.criterion) {
            case SplitCriterion::kGini:
            case SplitCriterion::kEntropy:
                return 0;
            case SplitCriterion::kMse:
                return 1;
            case SplitCriterion::kNewton:
                return 2;
        }
        return 0;
    }

    const ColumnMatrix& x_;
    const TreeParams& params_;
    const std::vector<int>* labels_;
    int n_classes_;
    const std::vector<double>* targets_;
    const std::vector<double>* grad_;
    const std::vector<double>* hess_;
    Rng rng_;
    std::vector<std::uint8_t> side_;
    std::vector<std::uint32_t> col_set_;
    std::size_t n_root_ = 0;
    std::size_t min_split_ = 2;
    TreeModel model_;
};

}  // namespace

ColumnMatrix ColumnMatrix::from_row_major(const std::vector<double>& rows, std::size_t n_rows,
                                          std::size_t n_cols) {
    ColumnMatrix m;
    m.n_rows = n_rows;
    m.n_cols = n_cols;
    m.data.resize(n_rows * n_cols);
    for (std::size_t r = 0; r < n_rows; ++r) {
        for (std::size_t c = 0; c < n_cols; ++c) {
            m.data[c * n_rows + r] = rows[r * n_cols + c];
        }
    }
    return m;
}

const TreeNode& TreeModel::leaf_for(const double* row) const {
    const TreeNode* node = &nodes[0];
    while (node->feature >= 0) {
        node = row[node->feature] <= node->threshold ? &nodes[static_cast<std::size_t>(node->left)]
                                                     : &nodes[static_cast<std::size_t>(node->right)];
    }
    return *node;
}

std::vector<double> TreeModel::gain_by_feature(std::size_t n_features) const {
    std::vector<double> gains(n_features, 0.0);
    for (const TreeNode& node : nodes) {
        if (node.feature >= 0) gains[static_cast<std::size_t>(node.feature)] += node.gain;
    }
    return gains;
}

void TreeModel::to_json(nlohmann::json& j) const {
    j["depth"] = depth;
    j["n_train_rows"] = n_train_rows;
    j["classifier"] = classifier;
    j["n_classes"] = n_classes;
    nlohmann::json arr = nlohmann::json::array();
    for (const TreeNode& n : nodes) {
        arr.push_back({{"feature", n.feature},
                       {"threshold", n.threshold},
                       {"left", n.left},
                       {"right", n.right},
                       {"value", n.value},
                       {"gain", n.gain},
                       {"n_rows", n.n_rows}});
    }
    j["nodes"] = std::move(arr);
}

TreeModel TreeModel::from_json(const nlohmann::json& j) {
    TreeModel m;
    m.depth = j.at("depth").get<int>();
    m.n_train_rows = j.at("n_train_rows").get<std::size_t>();
    m.classifier = j.at("classifier").get<bool>();
    m.n_classes = j.at("n_classes").get<int>();
    for (const auto& n : j.at("nodes")) {
        TreeNode node;
        node.feature = n.at("feature").get<int>();
        node.threshold = n.at("threshold").get<double>();
        node.left = n.at("left").get<int>();
        node.right = n.at("right").get<int>();
        node.value = n.at("value").get<std::vector<double>>();
        node.gain = n.at("gain").get<double>();
        node.n_rows = n.at("n_rows").get<std::size_t>();
        m.nodes.push_back(std::move(node));
    }
    return m;
}

TreeModel train_classification_tree(const ColumnMatrix& x, const std::vector<int>& labels,
                                    int n_classes, const TreeParams& params,
                                    const std::vector<std::uint32_t>& row_set,
                                    const std::vector<std::uint32_t>& col_set) {
    if (x.n_rows == 0) throw ValueError("tree: empty training set");
    TreeBuilder builder(x, params, &labels, n_classes, nullptr, nullptr, nullptr);
    return builder.build(row_set, col_set);
}

TreeModel train_regression_tree(const ColumnMatrix& x, const std::vector<double>& targets,
                                const TreeParams& params) {
    if (x.n_rows == 0) throw ValueError("tree: empty training set");
    TreeParams p = params;
    p.criterion = SplitCriterion::kMse;
    TreeBuilder builder(x, p, nullptr, 0, &targets, nullptr, nullptr);
    return builder.build({}, {});
}

TreeModel train_newton_tree(const ColumnMatrix& x, const std::vector<double>& grad,
                            const std::vector<double>& hess, const TreeParams& params) {
    if (x.n_rows == 0) throw ValueError("tree: empty training set");
    TreeParams p = params;
    p.criterion = SplitCriterion::kNewton;
    TreeBuilder builder(x, p, nullptr, 0, nullptr, &grad, &hess);
    return builder.build({}, {});
}

}  // namespace flowtune
