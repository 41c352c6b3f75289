#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace flowtune {

enum class SplitCriterion { kGini, kEntropy, kMse, kNewton };
enum class Splitter { kBest, kRandom };

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    std::vector<double> value;  // class probabilities, or {scalar} for regression
    double gain = 0.0;          // total impurity decrease / Newton gain of this split
    std::size_t n_rows = 0;
};

// Binary decision tree shared by the classifiers, the boosting ensemble and
// the optimizer surrogate. Rows go left when x[feature] <= threshold.
struct TreeModel {
    std::vector<TreeNode> nodes;  // node 0 is the root
    int depth = 0;
    std::size_t n_train_rows = 0;
    bool classifier = false;
    int n_classes = 0;

    const TreeNode& leaf_for(const double* row) const;
    double predict_value(const double* row) const { return leaf_for(row).value[0]; }
    const std::vector<double>& predict_proba(const double* row) const { return leaf_for(row).value; }

    // Per-feature gain sums (unnormalized); length n_features.
    std::vector<double> gain_by_feature(std::size_t n_features) const;

    void to_json(nlohmann::json& j) const;
    static TreeModel from_json(const nlohmann::json& j);
};

struct TreeParams {
    SplitCriterion criterion = SplitCriterion::kGini;
    Splitter splitter = Splitter::kBest;
    int max_depth = -1;                   // -1 = unbounded
    double min_samples_split_frac = 0.0;  // fraction of the root size, floor 2 rows
    std::size_t min_samples_leaf = 1;
    std::uint64_t seed = 0;
    double lambda = 1.0;  // Newton leaf L2
    double alpha = 0.0;   // Newton leaf L1
};

// Column-major training matrix; sort-once split search wants contiguous columns.
struct ColumnMatrix {
    std::vector<double> data;  // n_cols blocks of n_rows
    std::size_t n_rows = 0;
    std::size_t n_cols = 0;

    double at(std::size_t row, std::size_t col) const { return data[col * n_rows + row]; }

    static ColumnMatrix from_row_major(const std::vector<double>& rows, std::size_t n_rows,
                                       std::size_t n_cols);
};

// row_set may contain duplicates (bootstrap samples); col_set restricts the
// candidate features (empty = all). Node feature indices refer to the full
// column space either way.
TreeModel train_classification_tree(const ColumnMatrix& x, const std::vector<int>& labels,
                                    int n_classes, const TreeParams& params,
                                    const std::vector<std::uint32_t>& row_set = {},
                                    const std::vector<std::uint32_t>& col_set = {});

TreeModel train_regression_tree(const ColumnMatrix& x, const std::vector<double>& targets,
                                const TreeParams& params);

// Second-order boosting tree: leaf weight -G/(H+lambda), split scored with the
// standard second-order gain.
TreeModel train_newton_tree(const ColumnMatrix& x, const std::vector<double>& grad,
                            const std::vector<double>& hess, const TreeParams& params);

}  // namespace flowtune
