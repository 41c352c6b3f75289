#include "dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "common.hpp"
#include "rng.hpp"

#include <nlohmann/json.hpp>

namespace flowtune {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            cells.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    cells.push_back(cur);
    return cells;
}

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& s, double& out) {
    const std::string t = trim(s);
    if (t.empty()) return false;
    const char* begin = t.data();
    const char* end = begin + t.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    return ec == std::errc() && ptr == end && std::isfinite(out);
}

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    if (n % 2 == 1) return v[n / 2];
    return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

// Per-class row indices in row order.
std::vector<std::vector<std::size_t>> rows_by_class(const FlowDataset& data) {
    std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(data.n_classes()));
    for (std::size_t r = 0; r < data.n_rows; ++r) {
        out[static_cast<std::size_t>(data.labels[r])].push_back(r);
    }
    return out;
}

}  // namespace

FlowDataset FlowDataset::subset(const std::vector<std::size_t>& rows) const {
    FlowDataset out;
    out.n_rows = rows.size();
    out.n_cols = n_cols;
    out.feature_names = feature_names;
    out.class_names = class_names;
    out.features.reserve(rows.size() * n_cols);
    out.labels.reserve(rows.size());
    for (std::size_t r : rows) {
        if (r >= n_rows) throw ValueError("subset: row index out of range");
        out.features.insert(out.features.end(),
                            features.begin() + static_cast<std::ptrdiff_t>(r * n_cols),
                            features.begin() + static_cast<std::ptrdiff_t>((r + 1) * n_cols));
        out.labels.push_back(labels[r]);
    }
    return out;
}

void FlowDataset::validate() const {
    if (labels.size() != n_rows) throw ValueError("dataset: label count != row count");
    if (feature_names.size() != n_cols) throw ValueError("dataset: feature name count != column count");
    if (features.size() != n_rows * n_cols) throw ValueError("dataset: feature buffer size mismatch");
    std::set<std::string> names(feature_names.begin(), feature_names.end());
    if (names.size() != feature_names.size()) throw ValueError("dataset: duplicate feature names");
    const int L = n_classes();
    for (int lab : labels) {
        if (lab < 0 || lab >= L) throw ValueError("dataset: label out of range");
    }
    for (double v : features) {
        if (!std::isfinite(v)) throw ValueError("dataset: non-finite feature value");
    }
}

FlowDataset load_csv(const std::string& path, const std::string& label_column,
                     const std::optional<std::map<std::string, int>>& class_map) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open file: " + path);

    std::string line;
    if (!std::getline(in, line) || trim(line).empty()) throw IoError("missing header in " + path);

    const std::vector<std::string> header = split_csv_line(line);
    std::size_t label_col = header.size();
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (trim(header[i]) == label_column) {
            label_col = i;
            break;
        }
    }
    if (label_col == header.size()) {
        throw ValueError("label column '" + label_column + "' not found in " + path);
    }

    const std::size_t n_cols = header.size() - 1;
    std::vector<std::string> feature_names;
    feature_names.reserve(n_cols);
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (i != label_col) feature_names.push_back(trim(header[i]));
    }

    // cells[c] holds (row, value) for parsed cells; missing rows get imputed.
    std::vector<std::vector<std::pair<std::size_t, double>>> parsed(n_cols);
    std::vector<std::vector<std::size_t>> missing(n_cols);
    std::vector<std::string> label_strings;
    std::size_t n_rows = 0;

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const std::vector<std::string> cells = split_csv_line(line);
        if (cells.size() != header.size()) {
            throw ValueError("row " + std::to_string(line_no) + " has " +
                             std::to_string(cells.size()) + " cells, expected " +
                             std::to_string(header.size()));
        }
        std::size_t c = 0;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i == label_col) continue;
            const std::string cell = trim(cells[i]);
            double v = 0.0;
            if (cell.empty()) {
                missing[c].push_back(n_rows);
            } else if (parse_double(cell, v)) {
                parsed[c].emplace_back(n_rows, v);
            } else {
                throw ValueError("non-numeric value '" + cell + "' in column '" +
                                 feature_names[c] + "' at row " + std::to_string(line_no));
            }
            ++c;
        }
        label_strings.push_back(trim(cells[label_col]));
        ++n_rows;
    }
    if (n_rows == 0) throw ValueError("no data rows in " + path);

    for (std::size_t c = 0; c < n_cols; ++c) {
        if (parsed[c].empty()) {
            throw ValueError("column '" + feature_names[c] + "' is entirely non-numeric");
        }
    }

    FlowDataset data;
    data.n_rows = n_rows;
    data.n_cols = n_cols;
    data.feature_names = std::move(feature_names);
    data.features.assign(n_rows * n_cols, 0.0);
    for (std::size_t c = 0; c < n_cols; ++c) {
        std::vector<double> values;
        values.reserve(parsed[c].size());
        for (const auto& [r, v] : parsed[c]) {
            data.at(r, c) = v;
            values.push_back(v);
        }
        if (!missing[c].empty()) {
            const double med = median_of(values);
            for (std::size_t r : missing[c]) data.at(r, c) = med;
        }
    }

    // Label encoding: class-map when supplied, otherwise first-appearance
    // order with "normal" pinned to class 0.
    if (class_map) {
        int max_idx = -1;
        for (const auto& [name, idx] : *class_map) {
            (void)name;
            max_idx = std::max(max_idx, idx);
        }
        data.class_names.assign(static_cast<std::size_t>(max_idx + 1), "");
        for (const auto& [name, idx] : *class_map) {
            data.class_names[static_cast<std::size_t>(idx)] = name;
        }
        for (const std::string& s : label_strings) {
            auto it = class_map->find(s);
            if (it == class_map->end()) throw ValueError("unknown label '" + s + "'");
            data.labels.push_back(it->second);
        }
    } else {
        std::map<std::string, int> index;
        std::vector<std::string> order;
        for (const std::string& s : label_strings) {
            if (index.emplace(s, 0).second) order.push_back(s);
        }
        auto normal = std::find(order.begin(), order.end(), "normal");
        if (normal != order.end()) {
            std::rotate(order.begin(), normal, normal + 1);
        }
        for (std::size_t i = 0; i < order.size(); ++i) index[order[i]] = static_cast<int>(i);
        data.class_names = order;
        for (const std::string& s : label_strings) data.labels.push_back(index[s]);
    }

    data.validate();
    return data;
}

void save_csv(const FlowDataset& data, const std::string& path, const std::string& label_column) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write file: " + path);
    for (std::size_t c = 0; c < data.n_cols; ++c) out << data.feature_names[c] << ',';
    out << label_column << '\n';
    for (std::size_t r = 0; r < data.n_rows; ++r) {
        for (std::size_t c = 0; c < data.n_cols; ++c) out << format_double(data.at(r, c)) << ',';
        out << data.class_names[static_cast<std::size_t>(data.labels[r])] << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

SynthesisSpec SynthesisSpec::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    SynthesisSpec spec;
    spec.n_per_class = j.at("n_per_class").get<std::vector<std::size_t>>();
    spec.n_features = j.value("n_features", std::size_t{8});
    if (j.contains("class_shift")) {
        spec.class_shift = j.at("class_shift").get<std::vector<double>>();
    }
    spec.noise_sd = j.value("noise_sd", 1.0);
    spec.seed = j.value("seed", std::uint64_t{0});
    return spec;
}

std::string SynthesisSpec::to_json() const {
    nlohmann::json j;
    j["n_per_class"] = n_per_class;
    j["n_features"] = n_features;
    j["class_shift"] = class_shift;
    j["noise_sd"] = noise_sd;
    j["seed"] = seed;
    return j.dump();
}

FlowDataset synthesize(const SynthesisSpec& spec) {
    const std::size_t L = spec.n_per_class.size();
    if (L == 0) throw ValueError("synthesize: zero classes");
    for (std::size_t n : spec.n_per_class) {
        if (n < 1) throw ValueError("synthesize: n_per_class must be >= 1 per class");
    }
    if (spec.n_features < 2) throw ValueError("synthesize: need at least 2 features");
    if (!(spec.noise_sd > 0.0)) throw ValueError("synthesize: noise_sd must be positive");
    if (!spec.class_shift.empty() && spec.class_shift.size() != L) {
        throw ValueError("synthesize: class_shift size must match class count");
    }

    // Column names follow the Tstat per-flow statistics naming. The first few
    // columns are the anomaly signature columns: retransmitted segments for
    // loss, retransmitted bytes for duplicates, out-of-order segments for
    // reordering.
    static const char* kNames[] = {"c_bytes_all", "c_pkts_retx", "c_bytes_retx", "c_pkts_ooo",
                                   "durat",       "c_rtt_avg",   "s_rtt_avg",    "s_ack_cnt_p"};
    FlowDataset data;
    data.n_cols = spec.n_features;
    for (std::size_t c = 0; c < spec.n_features; ++c) {
        if (c < std::size(kNames)) {
            data.feature_names.emplace_back(kNames[c]);
        } else {
            data.feature_names.push_back("feat_" + std::to_string(c));
        }
    }

    static const char* kClasses[] = {"normal", "loss", "duplicate", "reordering"};
    for (std::size_t c = 0; c < L; ++c) {
        if (c < std::size(kClasses)) {
            data.class_names.emplace_back(kClasses[c]);
        } else {
            data.class_names.push_back("anomaly_" + std::to_string(c));
        }
    }

    Rng rng(mix_seed(spec.seed, 0x5f10));
    for (std::size_t c = 0; c < L; ++c) {
        // Class c != 0 shifts its signature column; column 0 stays a common
        // baseline so the shift columns are 1..n_features-1.
        const std::size_t sig_col = c == 0 ? 0 : 1 + (c - 1) % (spec.n_features - 1);
        const double shift = (c == 0 || spec.class_shift.empty()) ? 0.0 : spec.class_shift[c];
        for (std::size_t i = 0; i < spec.n_per_class[c]; ++i) {
            for (std::size_t f = 0; f < spec.n_features; ++f) {
                const double base = 10.0 * static_cast<double>(f + 1);
                double v = base + spec.noise_sd * rng.normal();
                if (c != 0 && f == sig_col) v += shift * spec.noise_sd;
                data.features.push_back(v);
            }
            data.labels.push_back(static_cast<int>(c));
        }
    }
    data.n_rows = data.labels.size();
    data.validate();
    return data;
}

std::vector<FoldSplit> kfold_splits(const FlowDataset& data, int k, std::uint64_t seed) {
    if (k < 2) throw ValueError("kfold: k must be >= 2");
    if (static_cast<std::size_t>(k) > data.n_rows) throw ValueError("kfold: k exceeds row count");

    // Stratified: each class is shuffled and dealt into k nearly equal chunks
    // so every fold sees every class.
    auto by_class = rows_by_class(data);
    for (const auto& rows : by_class) {
        if (rows.size() < static_cast<std::size_t>(k)) {
            throw ValueError("kfold: a class has fewer rows than k");
        }
    }

    Rng rng(mix_seed(seed, 0xf01d));
    std::vector<std::vector<std::vector<std::size_t>>> class_chunks;
    for (auto& rows : by_class) {
        rng.shuffle(rows);
        std::vector<std::vector<std::size_t>> chunks(static_cast<std::size_t>(k));
        const std::size_t n = rows.size();
        const std::size_t base = n / static_cast<std::size_t>(k);
        std::size_t extra = n % static_cast<std::size_t>(k);
        std::size_t pos = 0;
        for (int f = 0; f < k; ++f) {
            std::size_t take = base + (extra > 0 ? 1 : 0);
            if (extra > 0) --extra;
            for (std::size_t i = 0; i < take; ++i) chunks[static_cast<std::size_t>(f)].push_back(rows[pos++]);
        }
        class_chunks.push_back(std::move(chunks));
    }

    std::vector<FoldSplit> folds;
    for (int f = 0; f < k; ++f) {
        FoldSplit split;
        split.fold_id = f;
        split.seed = seed;
        std::vector<std::vector<std::size_t>> rest_by_class(by_class.size());
        for (std::size_t c = 0; c < class_chunks.size(); ++c) {
            for (int g = 0; g < k; ++g) {
                const auto& chunk = class_chunks[c][static_cast<std::size_t>(g)];
                if (g == f) {
                    split.test_idx.insert(split.test_idx.end(), chunk.begin(), chunk.end());
                } else {
                    rest_by_class[c].insert(rest_by_class[c].end(), chunk.begin(), chunk.end());
                }
            }
        }
        // 80:20 tune/validation split of the non-test rows, stratified.
        Rng fold_rng(mix_seed(seed, 0xa110 + static_cast<std::uint64_t>(f)));
        for (auto& rows : rest_by_class) {
            fold_rng.shuffle(rows);
            const std::size_t m = rows.size();
            std::size_t n_tune = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(m)));
            if (m >= 2) n_tune = std::clamp<std::size_t>(n_tune, 1, m - 1);
            for (std::size_t i = 0; i < m; ++i) {
                (i < n_tune ? split.tune_idx : split.validation_idx).push_back(rows[i]);
            }
        }
        std::sort(split.test_idx.begin(), split.test_idx.end());
        std::sort(split.tune_idx.begin(), split.tune_idx.end());
        std::sort(split.validation_idx.begin(), split.validation_idx.end());
        folds.push_back(std::move(split));
    }
    return folds;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> tune_validation_split(
    const FlowDataset& data, std::uint64_t seed) {
    auto by_class = rows_by_class(data);
    Rng rng(mix_seed(seed, 0x511f));
    std::vector<std::size_t> tune, validation;
    for (auto& rows : by_class) {
        rng.shuffle(rows);
        const std::size_t m = rows.size();
        std::size_t n_tune = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(m)));
        if (m >= 2) n_tune = std::clamp<std::size_t>(n_tune, 1, m - 1);
        for (std::size_t i = 0; i < m; ++i) {
            (i < n_tune ? tune : validation).push_back(rows[i]);
        }
    }
    std::sort(tune.begin(), tune.end());
    std::sort(validation.begin(), validation.end());
    return {tune, validation};
}

}  // namespace flowtune
