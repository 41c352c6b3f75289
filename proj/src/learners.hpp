#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "dataset.hpp"
#include "tree.hpp"

namespace flowtune {

enum class LearnerKind { kCart, kRf, kNb, kKnn, kGbt };

std::string to_string(LearnerKind kind);
LearnerKind learner_kind_from_string(const std::string& name);

struct LearnerSpec {
    LearnerKind kind = LearnerKind::kCart;
    std::map<std::string, double> num_params;
    std::map<std::string, std::string> cat_params;

    double num(const std::string& name) const;
    double num_or(const std::string& name, double fallback) const;
    const std::string& cat(const std::string& name) const;
    std::string cat_or(const std::string& name, const std::string& fallback) const;

    void validate() const;
    std::string to_json() const;
    static LearnerSpec from_json(const std::string& text);

    static LearnerSpec default_cart();
    static LearnerSpec default_rf();
    static LearnerSpec default_gbt();
};

// Multinomial NB tables; inputs are shifted by the per-column training
// minimum so every preprocessor pairing stays valid.
struct NbModel {
    std::vector<double> shift;           // per column
    std::vector<double> class_log_prior; // per class
    std::vector<double> feature_log_prob;  // L x d, row-major
};

struct KnnModel {
    std::vector<double> rows;  // n x d row-major
    std::vector<int> labels;
    std::size_t n_rows = 0;
};

// rf: one tree per estimator. gbt: n_rounds groups of one tree per class, in
// round-major order; round_weights carries the dart rescaling (all 1 for
// gbtree).
struct EnsembleModel {
    std::vector<TreeModel> trees;
    std::vector<double> round_weights;
    std::vector<double> train_loss;  // gbt: training log-loss after each round
};

struct TrainedModel {
    LearnerSpec spec;
    int n_classes = 0;
    std::size_t n_cols = 0;
    std::vector<std::string> feature_names;
    std::vector<std::string> class_names;
    std::variant<TreeModel, EnsembleModel, NbModel, KnnModel> impl;

    bool tree_based() const;
    std::string to_json() const;
    static TrainedModel from_json(const std::string& text);
};

TrainedModel train(const LearnerSpec& spec, const FlowDataset& data, std::uint64_t seed);

// Row-major probability matrix, n_rows x n_classes; each row sums to 1.
std::vector<double> predict_proba(const TrainedModel& model, const FlowDataset& data);

// Argmax of predict_proba, ties broken toward the lowest class index.
std::vector<int> predict(const TrainedModel& model, const FlowDataset& data);

// (feature name, normalized importance), descending. Tree-based models only.
std::vector<std::pair<std::string, double>> feature_importance(const TrainedModel& model);

// Softmax objective pieces, exposed for the gradient checks.
std::vector<double> softmax(const std::vector<double>& scores);
void softmax_grad_hess(const std::vector<double>& scores, int true_class,
                       std::vector<double>& grad, std::vector<double>& hess);
double multiclass_log_loss(const std::vector<double>& scores, int true_class);

}  // namespace flowtune
