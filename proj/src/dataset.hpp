#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace flowtune {

// Numeric feature matrix plus class labels for TCP flows. Row-major storage;
// immutable by convention once built (nothing downstream mutates it).
struct FlowDataset {
    std::vector<double> features;  // n_rows * n_cols, row-major
    std::size_t n_rows = 0;
    std::size_t n_cols = 0;
    std::vector<int> labels;                 // class indices in [0, n_classes)
    std::vector<std::string> feature_names;  // unique, size == n_cols
    std::vector<std::string> class_names;    // index 0 == "normal" when present

    double at(std::size_t row, std::size_t col) const { return features[row * n_cols + col]; }
    double& at(std::size_t row, std::size_t col) { return features[row * n_cols + col]; }
    int n_classes() const { return static_cast<int>(class_names.size()); }

    std::vector<double> row(std::size_t r) const {
        return {features.begin() + static_cast<std::ptrdiff_t>(r * n_cols),
                features.begin() + static_cast<std::ptrdiff_t>((r + 1) * n_cols)};
    }

    // Dataset restricted to the given rows (labels and names carried over).
    FlowDataset subset(const std::vector<std::size_t>& rows) const;

    // Throws ValueError if any structural invariant is violated.
    void validate() const;
};

// One fold of the k-fold rig. test_idx is one of the k partitions; the
// remaining rows are split 80:20 into tune/validation. train_idx is kept for
// rigs that hold out a separate training set; the k-fold rig leaves it empty.
struct FoldSplit {
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> tune_idx;
    std::vector<std::size_t> validation_idx;
    std::vector<std::size_t> test_idx;
    int fold_id = 0;
    std::uint64_t seed = 0;
};

// Parameters for synthesize(). class_shift[c] offsets class c's mean on its
// signature column; entry 0 (normal) is conventionally 0.
struct SynthesisSpec {
    std::vector<std::size_t> n_per_class;
    std::size_t n_features = 8;
    std::vector<double> class_shift;
    double noise_sd = 1.0;
    std::uint64_t seed = 0;

    static SynthesisSpec from_json(const std::string& text);
    std::string to_json() const;
};

FlowDataset load_csv(const std::string& path, const std::string& label_column,
                     const std::optional<std::map<std::string, int>>& class_map = std::nullopt);

void save_csv(const FlowDataset& data, const std::string& path,
              const std::string& label_column = "label");

FlowDataset synthesize(const SynthesisSpec& spec);

std::vector<FoldSplit> kfold_splits(const FlowDataset& data, int k, std::uint64_t seed);

// Stratified 80:20 split of all rows, used by the tune CLI when no explicit
// validation file is given. Returns (tune rows, validation rows).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> tune_validation_split(
    const FlowDataset& data, std::uint64_t seed);

}  // namespace flowtune
