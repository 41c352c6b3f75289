#include "preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "common.hpp"
#include "rng.hpp"

#include <nlohmann/json.hpp>

namespace flowtune {

namespace {

struct KindName {
    PreprocessorKind kind;
    const char* name;
};

constexpr KindName kKindNames[] = {
    {PreprocessorKind::kStandardScaler, "standard_scaler"},
    {PreprocessorKind::kMinMaxScaler, "minmax_scaler"},
    {PreprocessorKind::kKernelCenterer, "kernel_centerer"},
    {PreprocessorKind::kNormalizer, "normalizer"},
    {PreprocessorKind::kMaxAbsScaler, "maxabs_scaler"},
    {PreprocessorKind::kBinarizer, "binarizer"},
    {PreprocessorKind::kRobustScaler, "robust_scaler"},
    {PreprocessorKind::kQuantileTransformer, "quantile_transformer"},
    {PreprocessorKind::kSmote, "smote"},
    {PreprocessorKind::kNone, "none"},
};

void require_range(const PreprocessorSpec& s, const std::string& name, double lo, double hi) {
    auto it = s.num_params.find(name);
    if (it == s.num_params.end()) {
        throw ValueError(to_string(s.kind) + ": missing parameter '" + name + "'");
    }
    if (!(it->second >= lo && it->second <= hi)) {
        throw ValueError(to_string(s.kind) + ": parameter '" + name + "' out of range");
    }
}

void require_choice(const PreprocessorSpec& s, const std::string& name,
                    std::initializer_list<const char*> values) {
    auto it = s.cat_params.find(name);
    if (it == s.cat_params.end()) {
        throw ValueError(to_string(s.kind) + ": missing parameter '" + name + "'");
    }
    for (const char* v : values) {
        if (it->second == v) return;
    }
    throw ValueError(to_string(s.kind) + ": invalid value '" + it->second + "' for '" + name + "'");
}

double column_mean(const FlowDataset& d, std::size_t c) {
    double sum = 0.0;
    for (std::size_t r = 0; r < d.n_rows; ++r) sum += d.at(r, c);
    return sum / static_cast<double>(d.n_rows);
}

std::vector<double> column_values(const FlowDataset& d, std::size_t c,
                                  const std::vector<std::size_t>* rows = nullptr) {
    std::vector<double> v;
    if (rows) {
        v.reserve(rows->size());
        for (std::size_t r : *rows) v.push_back(d.at(r, c));
    } else {
        v.reserve(d.n_rows);
        for (std::size_t r = 0; r < d.n_rows; ++r) v.push_back(d.at(r, c));
    }
    return v;
}

// Inverse of the standard normal CDF (Acklam's rational approximation).
double inv_norm_cdf(double p) {
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double p_low = 0.02425;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (p <= 1.0 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
               (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    }
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
}

// Empirical CDF through the reference quantile table. Averaging the leftmost
// and rightmost interpolated positions maps duplicate-value plateaus to the
// midpoint of their probability run.
double table_cdf(const std::vector<double>& values, double x) {
    const std::size_t q = values.size();
    if (q == 1) return 0.5;
    const double denom = static_cast<double>(q - 1);
    auto pos_right = [&](double t) {
        if (t >= values.back()) return 1.0;
        const auto it = std::upper_bound(values.begin(), values.end(), t);
        if (it == values.begin()) return 0.0;
        const std::size_t hi = static_cast<std::size_t>(it - values.begin());
        const std::size_t lo = hi - 1;
        if (values[lo] == t) return static_cast<double>(lo) / denom;
        return (static_cast<double>(lo) + (t - values[lo]) / (values[hi] - values[lo])) / denom;
    };
    auto pos_left = [&](double t) {
        if (t <= values.front()) return 0.0;
        const auto it = std::lower_bound(values.begin(), values.end(), t);
        if (it == values.end()) return 1.0;
        const std::size_t hi = static_cast<std::size_t>(it - values.begin());
        if (values[hi] == t) return static_cast<double>(hi) / denom;
        const std::size_t lo = hi - 1;
        return (static_cast<double>(lo) + (t - values[lo]) / (values[hi] - values[lo])) / denom;
    };
    return 0.5 * (pos_right(x) + pos_left(x));
}

double minkowski_distance(const double* a, const double* b, std::size_t d, double exponent) {
    double sum = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        sum += std::pow(std::abs(a[i] - b[i]), exponent);
    }
    return std::pow(sum, 1.0 / exponent);
}

}  // namespace

std::string to_string(PreprocessorKind kind) {
    for (const auto& kn : kKindNames) {
        if (kn.kind == kind) return kn.name;
    }
    throw ValueError("unknown preprocessor kind");
}

PreprocessorKind preprocessor_kind_from_string(const std::string& name) {
    for (const auto& kn : kKindNames) {
        if (name == kn.name) return kn.kind;
    }
    throw ValueError("unknown preprocessor kind '" + name + "'");
}

double PreprocessorSpec::num(const std::string& name) const {
    auto it = num_params.find(name);
    if (it == num_params.end()) {
        throw ValueError(to_string(kind) + ": missing parameter '" + name + "'");
    }
    return it->second;
}

const std::string& PreprocessorSpec::cat(const std::string& name) const {
    auto it = cat_params.find(name);
    if (it == cat_params.end()) {
        throw ValueError(to_string(kind) + ": missing parameter '" + name + "'");
    }
    return it->second;
}

void PreprocessorSpec::validate() const {
    switch (kind) {
        case PreprocessorKind::kNormalizer:
            require_choice(*this, "norm", {"l1", "l2", "max"});
            break;
        case PreprocessorKind::kBinarizer:
            require_range(*this, "threshold", 0.0, 100.0);
            break;
        case PreprocessorKind::kRobustScaler:
            require_range(*this, "a", 0.0, 50.0);
            require_range(*this, "b", 51.0, 100.0);
            break;
        case PreprocessorKind::kQuantileTransformer:
            require_range(*this, "n_quantiles", 100.0, 1000.0);
            require_range(*this, "subsample", 1000.0, 1e5);
            require_choice(*this, "output_distribution", {"normal", "uniform"});
            break;
        case PreprocessorKind::kSmote: {
            require_range(*this, "n_neighbors", 1.0, 20.0);
            require_range(*this, "minkowski_exponent", 0.1, 5.0);
            const double n = num("n_synthetics");
            if (n != 50.0 && n != 100.0 && n != 200.0 && n != 400.0) {
                throw ValueError("smote: n_synthetics must be one of {50,100,200,400}");
            }
            break;
        }
        default:
            break;
    }
}

std::string PreprocessorSpec::to_json() const {
    nlohmann::json params = nlohmann::json::object();
    for (const auto& [k, v] : num_params) params[k] = v;
    for (const auto& [k, v] : cat_params) params[k] = v;
    nlohmann::json j;
    j["kind"] = to_string(kind);
    j["params"] = params;
    return j.dump();
}

PreprocessorSpec PreprocessorSpec::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    PreprocessorSpec spec;
    spec.kind = preprocessor_kind_from_string(j.at("kind").get<std::string>());
    if (j.contains("params")) {
        for (const auto& [k, v] : j.at("params").items()) {
            if (v.is_string()) {
                spec.cat_params[k] = v.get<std::string>();
            } else {
                spec.num_params[k] = v.get<double>();
            }
        }
    }
    spec.validate();
    return spec;
}

double percentile(std::vector<double> values, double q) {
    if (values.empty()) throw ValueError("percentile of empty sample");
    std::sort(values.begin(), values.end());
    const double rank = q / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const auto hi = static_cast<std::size_t>(std::ceil(rank));
    if (lo == hi) return values[lo];
    const double frac = rank - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

namespace {

void check_smote_preconditions(const PreprocessorSpec& spec, const FlowDataset& data) {
    const auto k = static_cast<std::size_t>(spec.num("n_neighbors"));
    std::vector<std::size_t> counts(static_cast<std::size_t>(data.n_classes()), 0);
    for (int lab : data.labels) ++counts[static_cast<std::size_t>(lab)];
    const std::size_t majority = *std::max_element(counts.begin(), counts.end());
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (counts[c] < majority && counts[c] <= k) {
            throw ValueError("smote: class " + std::to_string(c) + " ('" + data.class_names[c] +
                             "') has " + std::to_string(counts[c]) +
                             " rows, needs more than n_neighbors=" + std::to_string(k));
        }
    }
}

}  // namespace

FittedTransformer fit(const PreprocessorSpec& spec, const FlowDataset& data) {
    spec.validate();
    if (data.n_rows == 0) throw ValueError("fit: empty dataset");
    FittedTransformer t;
    t.spec = spec;
    t.n_cols_fit = data.n_cols;

    switch (spec.kind) {
        case PreprocessorKind::kStandardScaler: {
            for (std::size_t c = 0; c < data.n_cols; ++c) {
                const double mean = column_mean(data, c);
                double ss = 0.0;
                for (std::size_t r = 0; r < data.n_rows; ++r) {
                    const double d = data.at(r, c) - mean;
                    ss += d * d;
                }
                double sd = std::sqrt(ss / static_cast<double>(data.n_rows));
                if (sd == 0.0) sd = 1.0;  // zero-variance column: divide by 1
                t.center.push_back(mean);
                t.scale.push_back(sd);
            }
            break;
        }
        case PreprocessorKind::kMinMaxScaler: {
            for (std::size_t c = 0; c < data.n_cols; ++c) {
                auto v = column_values(data, c);
                const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
                double range = *mx - *mn;
                if (range == 0.0) range = 1.0;
                t.center.push_back(*mn);
                t.scale.push_back(range);
            }
            break;
        }
        case PreprocessorKind::kMaxAbsScaler: {
            for (std::size_t c = 0; c < data.n_cols; ++c) {
                double m = 0.0;
                for (std::size_t r = 0; r < data.n_rows; ++r) {
                    m = std::max(m, std::abs(data.at(r, c)));
                }
                if (m == 0.0) m = 1.0;
                t.scale.push_back(m);
            }
            break;
        }
        case PreprocessorKind::kRobustScaler: {
            const double a = spec.num("a");
            const double b = spec.num("b");
            for (std::size_t c = 0; c < data.n_cols; ++c) {
                auto v = column_values(data, c);
                const double med = percentile(v, 50.0);
                double range = percentile(v, b) - percentile(v, a);
                if (range == 0.0) range = 1.0;
                t.center.push_back(med);
                t.scale.push_back(range);
            }
            break;
        }
        case PreprocessorKind::kQuantileTransformer: {
            const auto subsample = static_cast<std::size_t>(spec.num("subsample"));
            auto n_q = static_cast<std::size_t>(spec.num("n_quantiles"));
            std::vector<std::size_t> ref_rows(data.n_rows);
            std::iota(ref_rows.begin(), ref_rows.end(), 0);
            if (data.n_rows > subsample) {
                // Subsampling without replacement, seeded from the parameter
                // assignment so fit is a pure function of (spec, data).
                Rng rng(mix_seed(0x9a71, static_cast<std::uint64_t>(spec.num("n_quantiles")) * 131 +
                                             subsample));
                rng.shuffle(ref_rows);
                ref_rows.resize(subsample);
                std::sort(ref_rows.begin(), ref_rows.end());
            }
            n_q = std::min(n_q, ref_rows.size());
            if (n_q < 2) n_q = 2;
            for (std::size_t c = 0; c < data.n_cols; ++c) {
                auto v = column_values(data, c, &ref_rows);
                std::vector<double> table(n_q);
                for (std::size_t i = 0; i < n_q; ++i) {
                    table[i] = percentile(v, 100.0 * static_cast<double>(i) /
                                                 static_cast<double>(n_q - 1));
                }
                t.quantiles.push_back(std::move(table));
            }
            break;
        }
        case PreprocessorKind::kKernelCenterer: {
            t.fit_rows = data.features;
            t.n_fit = data.n_rows;
            t.fit_mean.assign(data.n_cols, 0.0);
            for (std::size_t c = 0; c < data.n_cols; ++c) t.fit_mean[c] = column_mean(data, c);
            break;
        }
        case PreprocessorKind::kSmote:
            check_smote_preconditions(spec, data);
            break;
        case PreprocessorKind::kNormalizer:
        case PreprocessorKind::kBinarizer:
        case PreprocessorKind::kNone:
            break;
    }
    return t;
}

FlowDataset apply(const FittedTransformer& t, const FlowDataset& data) {
    if (data.n_cols != t.n_cols_fit) {
        throw ValueError("apply: column count " + std::to_string(data.n_cols) +
                         " does not match fitted count " + std::to_string(t.n_cols_fit));
    }
    FlowDataset out = data;

    switch (t.spec.kind) {
        case PreprocessorKind::kStandardScaler:
        case PreprocessorKind::kMinMaxScaler:
        case PreprocessorKind::kRobustScaler: {
            for (std::size_t r = 0; r < out.n_rows; ++r) {
                for (std::size_t c = 0; c < out.n_cols; ++c) {
                    out.at(r, c) = (out.at(r, c) - t.center[c]) / t.scale[c];
                }
            }
            break;
        }
        case PreprocessorKind::kMaxAbsScaler: {
            for (std::size_t r = 0; r < out.n_rows; ++r) {
                for (std::size_t c = 0; c < out.n_cols; ++c) {
                    out.at(r, c) /= t.scale[c];
                }
            }
            break;
        }
        case PreprocessorKind::kBinarizer: {
            const double threshold = t.spec.num("threshold");
            for (double& v : out.features) v = v > threshold ? 1.0 : 0.0;
            break;
        }
        case PreprocessorKind::kNormalizer: {
            const std::string& norm = t.spec.cat("norm");
            for (std::size_t r = 0; r < out.n_rows; ++r) {
                double m = 0.0;
                for (std::size_t c = 0; c < out.n_cols; ++c) {
                    const double v = out.at(r, c);
                    if (norm == "l1") {
                        m += std::abs(v);
                    } else if (norm == "l2") {
                        m += v * v;
                    } else {
                        m = std::max(m, std::abs(v));
                    }
                }
                if (norm == "l2") m = std::sqrt(m);
                if (m == 0.0) continue;  // zero rows stay zero
                for (std::size_t c = 0; c < out.n_cols; ++c) out.at(r, c) /= m;
            }
            break;
        }
        case PreprocessorKind::kQuantileTransformer: {
            const bool normal_out = t.spec.cat("output_distribution") == "normal";
            constexpr double kBound = 1e-7;
            for (std::size_t r = 0; r < out.n_rows; ++r) {
                for (std::size_t c = 0; c < out.n_cols; ++c) {
                    double u = table_cdf(t.quantiles[c], out.at(r, c));
                    if (normal_out) {
                        u = std::clamp(u, kBound, 1.0 - kBound);
                        out.at(r, c) = inv_norm_cdf(u);
                    } else {
                        out.at(r, c) = u;
                    }
                }
            }
            break;
        }
        case PreprocessorKind::kKernelCenterer: {
            // Centered linear kernel against the fitted rows:
            // K~(x, x_j) = (x - mean) . (x_fit_j - mean).
            FlowDataset mapped;
            mapped.n_rows = data.n_rows;
            mapped.n_cols = t.n_fit;
            mapped.labels = data.labels;
            mapped.class_names = data.class_names;
            for (std::size_t j = 0; j < t.n_fit; ++j) {
                mapped.feature_names.push_back("k_" + std::to_string(j));
            }
            mapped.features.assign(mapped.n_rows * mapped.n_cols, 0.0);
            const std::size_t d = t.n_cols_fit;
            for (std::size_t r = 0; r < data.n_rows; ++r) {
                for (std::size_t j = 0; j < t.n_fit; ++j) {
                    double dot = 0.0;
                    for (std::size_t c = 0; c < d; ++c) {
                        dot += (data.at(r, c) - t.fit_mean[c]) *
                               (t.fit_rows[j * d + c] - t.fit_mean[c]);
                    }
                    mapped.at(r, j) = dot;
                }
            }
            return mapped;
        }
        case PreprocessorKind::kSmote:
        case PreprocessorKind::kNone:
            break;
    }
    return out;
}

FlowDataset oversample(const PreprocessorSpec& spec, const FlowDataset& data, std::uint64_t seed) {
    if (spec.kind != PreprocessorKind::kSmote) throw ValueError("oversample: spec is not smote");
    spec.validate();
    check_smote_preconditions(spec, data);

    const auto k = static_cast<std::size_t>(spec.num("n_neighbors"));
    const auto target = static_cast<std::size_t>(spec.num("n_synthetics"));
    const double exponent = spec.num("minkowski_exponent");

    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(data.n_classes()));
    for (std::size_t r = 0; r < data.n_rows; ++r) {
        by_class[static_cast<std::size_t>(data.labels[r])].push_back(r);
    }
    std::size_t majority = 0;
    for (const auto& rows : by_class) majority = std::max(majority, rows.size());

    FlowDataset out = data;
    Rng rng(mix_seed(seed, 0x5307e));
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        const auto& rows = by_class[c];
        if (rows.size() == majority || rows.size() >= target || rows.empty()) continue;

        // k nearest minority neighbors of each minority row, self excluded,
        // distance ties broken by row order.
        std::vector<std::vector<std::size_t>> neighbors(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            std::vector<std::pair<double, std::size_t>> dist;
            dist.reserve(rows.size() - 1);
            const double* pi = &data.features[rows[i] * data.n_cols];
            for (std::size_t j = 0; j < rows.size(); ++j) {
                if (j == i) continue;
                const double* pj = &data.features[rows[j] * data.n_cols];
                dist.emplace_back(minkowski_distance(pi, pj, data.n_cols, exponent), j);
            }
            std::sort(dist.begin(), dist.end());
            const std::size_t take = std::min(k, dist.size());
            for (std::size_t n = 0; n < take; ++n) neighbors[i].push_back(dist[n].second);
        }

        for (std::size_t added = rows.size(); added < target; ++added) {
            const std::size_t pi = rng.index(rows.size());
            const auto& cand = neighbors[pi];
            const std::size_t qi = cand[rng.index(cand.size())];
            const double u = rng.uniform();
            const double* p = &data.features[rows[pi] * data.n_cols];
            const double* q = &data.features[rows[qi] * data.n_cols];
            for (std::size_t f = 0; f < data.n_cols; ++f) {
                out.features.push_back(p[f] + u * (q[f] - p[f]));
            }
            out.labels.push_back(static_cast<int>(c));
        }
    }
    out.n_rows = out.labels.size();
    out.validate();
    return out;
}

}  // namespace flowtune
