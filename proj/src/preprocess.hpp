#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dataset.hpp"

namespace flowtune {

enum class PreprocessorKind {
    kStandardScaler,
    kMinMaxScaler,
    kKernelCenterer,
    kNormalizer,
    kMaxAbsScaler,
    kBinarizer,
    kRobustScaler,
    kQuantileTransformer,
    kSmote,
    kNone,
};

std::string to_string(PreprocessorKind kind);
PreprocessorKind preprocessor_kind_from_string(const std::string& name);

// One concrete preprocessor choice plus its parameters, keyed by the option
// table's parameter names (norm, threshold, a, b, n_quantiles, subsample,
// output_distribution, n_neighbors, n_synthetics, minkowski_exponent).
struct PreprocessorSpec {
    PreprocessorKind kind = PreprocessorKind::kNone;
    std::map<std::string, double> num_params;
    std::map<std::string, std::string> cat_params;

    double num(const std::string& name) const;
    const std::string& cat(const std::string& name) const;

    // Throws ValueError when a parameter is missing or out of range.
    void validate() const;

    std::string to_json() const;
    static PreprocessorSpec from_json(const std::string& text);
};

// Fitted statistics; computed from the fit data only, immutable afterwards.
struct FittedTransformer {
    PreprocessorSpec spec;
    std::size_t n_cols_fit = 0;

    std::vector<double> center;  // per-column mean / min / median
    std::vector<double> scale;   // per-column sd / range / max-abs

    // quantile_transformer: per-column reference quantiles at probs i/(q-1).
    std::vector<std::vector<double>> quantiles;

    // kernel_centerer: fitted rows and their column-wise mean.
    std::vector<double> fit_rows;  // n_fit x n_cols_fit, row-major
    std::size_t n_fit = 0;
    std::vector<double> fit_mean;
};

FittedTransformer fit(const PreprocessorSpec& spec, const FlowDataset& data);

// Transforms features; labels and row count unchanged. SMOTE and `none` act
// as identity here (SMOTE only ever grows training data via oversample()).
FlowDataset apply(const FittedTransformer& t, const FlowDataset& data);

// SMOTE: grows every non-majority class to max(n_synthetics, current size)
// with convex combinations of Minkowski nearest neighbor pairs.
FlowDataset oversample(const PreprocessorSpec& spec, const FlowDataset& data, std::uint64_t seed);

// Linear-interpolated percentile (q in [0, 100]) of an unsorted sample.
double percentile(std::vector<double> values, double q);

}  // namespace flowtune
