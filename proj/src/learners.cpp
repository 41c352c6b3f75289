#include "learners.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "common.hpp"
#include "rng.hpp"

#include <nlohmann/json.hpp>

namespace flowtune {

namespace {

constexpr double kNbAlphaFloor = 1e-10;
constexpr double kPriorEps = 1e-10;

int argmax_lowest(const double* v, int n) {
    int best = 0;
    for (int i = 1; i < n; ++i) {
        if (v[i] > v[best]) best = i;
    }
    return best;
}

double minkowski_p(const double* a, const double* b, std::size_t d, double p) {
    double sum = 0.0;
    for (std::size_t i = 0; i < d; ++i) sum += std::pow(std::abs(a[i] - b[i]), p);
    return std::pow(sum, 1.0 / p);
}

double chebyshev(const double* a, const double* b, std::size_t d) {
    double m = 0.0;
    for (std::size_t i = 0; i < d; ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

TreeParams cart_params(const LearnerSpec& spec, std::uint64_t seed) {
    TreeParams p;
    p.criterion = spec.cat_or("criterion", "gini") == "entropy" ? SplitCriterion::kEntropy
                                                                : SplitCriterion::kGini;
    p.splitter = spec.cat_or("splitter", "best") == "random" ? Splitter::kRandom : Splitter::kBest;
    p.min_samples_split_frac = spec.num_or("min_samples_split", 0.0);
    p.seed = seed;
    return p;
}

TrainedModel train_cart(const LearnerSpec& spec, const FlowDataset& data, std::uint64_t seed) {
    const auto x = ColumnMatrix::from_row_major(data.features, data.n_rows, data.n_cols);
    TrainedModel m;
    m.impl = train_classification_tree(x, data.labels, data.n_classes(), cart_params(spec, seed));
    return m;
}

TrainedModel train_rf(const LearnerSpec& spec, const FlowDataset& data, std::uint64_t seed) {
    const auto x = ColumnMatrix::from_row_major(data.features, data.n_rows, data.n_cols);
    const auto n_estimators = static_cast<std::size_t>(spec.num("n_estimators"));
    const std::size_t n_sub =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::log2(static_cast<double>(data.n_cols))));

    EnsembleModel ensemble;
    for (std::size_t t = 0; t < n_estimators; ++t) {
        Rng rng(mix_seed(seed, 0x2f00 + t));
        std::vector<std::uint32_t> rows(data.n_rows);
        for (auto& r : rows) r = static_cast<std::uint32_t>(rng.index(data.n_rows));
        std::vector<std::uint32_t> cols(data.n_cols);
        std::iota(cols.begin(), cols.end(), 0);
        rng.shuffle(cols);
        cols.resize(std::min(n_sub, cols.size()));
        std::sort(cols.begin(), cols.end());
        ensemble.trees.push_back(train_classification_tree(x, data.labels, data.n_classes(),
                                                           cart_params(spec, mix_seed(seed, t)),
                                                           rows, cols));
        ensemble.round_weights.push_back(1.0);
    }
    TrainedModel m;
    m.impl = std::move(ensemble);
    return m;
}

TrainedModel train_nb(const LearnerSpec& spec, const FlowDataset& data) {
    const double alpha = std::max(spec.num("alpha"), kNbAlphaFloor);
    const int L = data.n_classes();
    const std::size_t d = data.n_cols;

    NbModel nb;
    nb.shift.assign(d, 0.0);
    for (std::size_t c = 0; c < d; ++c) {
        double mn = data.at(0, c);
        for (std::size_t r = 1; r < data.n_rows; ++r) mn = std::min(mn, data.at(r, c));
        nb.shift[c] = mn;
    }

    std::vector<double> class_count(static_cast<std::size_t>(L), 0.0);
    std::vector<double> feature_count(static_cast<std::size_t>(L) * d, 0.0);
    for (std::size_t r = 0; r < data.n_rows; ++r) {
        const auto c = static_cast<std::size_t>(data.labels[r]);
        class_count[c] += 1.0;
        for (std::size_t f = 0; f < d; ++f) {
            feature_count[c * d + f] += data.at(r, f) - nb.shift[f];
        }
    }

    nb.class_log_prior.resize(static_cast<std::size_t>(L));
    nb.feature_log_prob.resize(static_cast<std::size_t>(L) * d);
    const double n = static_cast<double>(data.n_rows);
    for (int c = 0; c < L; ++c) {
        const auto ci = static_cast<std::size_t>(c);
        nb.class_log_prior[ci] = std::log((class_count[ci] + kPriorEps) / (n + L * kPriorEps));
        double total = 0.0;
        for (std::size_t f = 0; f < d; ++f) total += feature_count[ci * d + f];
        const double denom = total + alpha * static_cast<double>(d);
        for (std::size_t f = 0; f < d; ++f) {
            nb.feature_log_prob[ci * d + f] = std::log((feature_count[ci * d + f] + alpha) / denom);
        }
    }
    TrainedModel m;
    m.impl = std::move(nb);
    return m;
}

TrainedModel train_knn(const FlowDataset& data) {
    KnnModel knn;
    knn.rows = data.features;
    knn.labels = data.labels;
    knn.n_rows = data.n_rows;
    TrainedModel m;
    m.impl = std::move(knn);
    return m;
}

constexpr double kDartDropRate = 0.1;

TrainedModel train_gbt(const LearnerSpec& spec, const FlowDataset& data, std::uint64_t seed) {
    const double learning_rate = spec.num("learning_rate");
    if (learning_rate <= 0.0) throw ValueError("gbt: learning_rate must be positive");
    const auto n_rounds = static_cast<std::size_t>(spec.num("n_estimators"));
    const bool dart = spec.cat_or("booster", "gbtree") == "dart";
    const int L = data.n_classes();
    const std::size_t n = data.n_rows;

    TreeParams tp;
    tp.max_depth = static_cast<int>(spec.num_or("max_depth", 3.0));
    tp.lambda = spec.num_or("lambda", 1.0);
    tp.alpha = spec.num_or("alpha", 0.0);

    const auto x = ColumnMatrix::from_row_major(data.features, data.n_rows, data.n_cols);

    // scores[i*L + c] = current additive score of row i for class c.
    std::vector<double> scores(n * static_cast<std::size_t>(L), 0.0);
    std::vector<double> grad(n), hess(n);

    EnsembleModel ensemble;
    Rng drop_rng(mix_seed(seed, 0xda27));

    auto tree_scores = [&](std::size_t round, std::size_t row) {
        // contribution of a round's tree group to one row, before weighting
        std::vector<double> out(static_cast<std::size_t>(L));
        const double* rowp = &data.features[row * data.n_cols];
        for (int c = 0; c < L; ++c) {
            out[static_cast<std::size_t>(c)] =
                ensemble.trees[round * static_cast<std::size_t>(L) + static_cast<std::size_t>(c)]
                    .predict_value(rowp);
        }
        return out;
    };

    for (std::size_t round = 0; round < n_rounds; ++round) {
        // dart: drop whole prior rounds so per-class scores stay coherent.
        std::vector<std::size_t> dropped;
        std::vector<double> base = scores;
        if (dart && round > 0) {
            for (std::size_t r = 0; r < round; ++r) {
                if (drop_rng.uniform() < kDartDropRate) dropped.push_back(r);
            }
            for (std::size_t r : dropped) {
                const double w = ensemble.round_weights[r] * learning_rate;
                for (std::size_t i = 0; i < n; ++i) {
                    const auto contrib = tree_scores(r, i);
                    for (int c = 0; c < L; ++c) {
                        base[i * static_cast<std::size_t>(L) + static_cast<std::size_t>(c)] -=
                            w * contrib[static_cast<std::size_t>(c)];
                    }
                }
            }
        }

        const double new_weight = dart ? 1.0 / static_cast<double>(dropped.size() + 1) : 1.0;
        std::vector<TreeModel> round_trees;
        for (int c = 0; c < L; ++c) {
            for (std::size_t i = 0; i < n; ++i) {
                const double* s = &base[i * static_cast<std::size_t>(L)];
                double mx = s[0];
                for (int k = 1; k < L; ++k) mx = std::max(mx, s[k]);
                double z = 0.0;
                for (int k = 0; k < L; ++k) z += std::exp(s[k] - mx);
                const double p = std::exp(s[c] - mx) / z;
                grad[i] = p - (data.labels[i] == c ? 1.0 : 0.0);
                hess[i] = p * (1.0 - p);
            }
            TreeParams round_tp = tp;
            round_tp.seed = mix_seed(seed, round * static_cast<std::size_t>(L) +
                                               static_cast<std::size_t>(c));
            round_trees.push_back(train_newton_tree(x, grad, hess, round_tp));
        }

        // Fold the new trees (and the dart rescaling of the dropped ones)
        // into the cached scores.
        const std::size_t k_dropped = dropped.size();
        for (std::size_t i = 0; i < n; ++i) {
            const double* rowp = &data.features[i * data.n_cols];
            for (int c = 0; c < L; ++c) {
                scores[i * static_cast<std::size_t>(L) + static_cast<std::size_t>(c)] +=
                    learning_rate * new_weight *
                    round_trees[static_cast<std::size_t>(c)].predict_value(rowp);
            }
        }
        if (dart && k_dropped > 0) {
            const double factor =
                static_cast<double>(k_dropped) / static_cast<double>(k_dropped + 1);
            for (std::size_t r : dropped) {
                const double delta =
                    (factor - 1.0) * ensemble.round_weights[r] * learning_rate;
                for (std::size_t i = 0; i < n; ++i) {
                    const auto contrib = tree_scores(r, i);
                    for (int c = 0; c < L; ++c) {
                        scores[i * static_cast<std::size_t>(L) + static_cast<std::size_t>(c)] +=
                            delta * contrib[static_cast<std::size_t>(c)];
                    }
                }
                ensemble.round_weights[r] *= factor;
            }
        }

        for (auto& t : round_trees) ensemble.trees.push_back(std::move(t));
        ensemble.round_weights.push_back(new_weight);

        double loss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double* s = &scores[i * static_cast<std::size_t>(L)];
            double mx = s[0];
            for (int k = 1; k < L; ++k) mx = std::max(mx, s[k]);
            double z = 0.0;
            for (int k = 0; k < L; ++k) z += std::exp(s[k] - mx);
            loss -= s[data.labels[i]] - mx - std::log(z);
        }
        ensemble.train_loss.push_back(loss / static_cast<double>(n));
    }

    TrainedModel m;
    m.impl = std::move(ensemble);
    return m;
}

}  // namespace

std::string to_string(LearnerKind kind) {
    switch (kind) {
        case LearnerKind::kCart: return "cart";
        case LearnerKind::kRf: return "rf";
        case LearnerKind::kNb: return "nb";
        case LearnerKind::kKnn: return "knn";
        case LearnerKind::kGbt: return "gbt";
    }
    throw ValueError("unknown learner kind");
}

LearnerKind learner_kind_from_string(const std::string& name) {
    if (name == "cart") return LearnerKind::kCart;
    if (name == "rf") return LearnerKind::kRf;
    if (name == "nb") return LearnerKind::kNb;
    if (name == "knn") return LearnerKind::kKnn;
    if (name == "gbt") return LearnerKind::kGbt;
    throw ValueError("unknown learner kind '" + name + "'");
}

double LearnerSpec::num(const std::string& name) const {
    auto it = num_params.find(name);
    if (it == num_params.end()) {
        throw ValueError(to_string(kind) + ": missing parameter '" + name + "'");
    }
    return it->second;
}

double LearnerSpec::num_or(const std::string& name, double fallback) const {
    auto it = num_params.find(name);
    return it == num_params.end() ? fallback : it->second;
}

const std::string& LearnerSpec::cat(const std::string& name) const {
    auto it = cat_params.find(name);
    if (it == cat_params.end()) {
        throw ValueError(to_string(kind) + ": missing parameter '" + name + "'");
    }
    return it->second;
}

std::string LearnerSpec::cat_or(const std::string& name, const std::string& fallback) const {
    auto it = cat_params.find(name);
    return it == cat_params.end() ? fallback : it->second;
}

namespace {

void check_num(const LearnerSpec& s, const std::string& name, double lo, double hi) {
    const double v = s.num(name);
    if (!(v >= lo && v <= hi)) {
        throw ValueError(to_string(s.kind) + ": parameter '" + name + "' out of range");
    }
}

void check_cat(const LearnerSpec& s, const std::string& name,
               std::initializer_list<const char*> values) {
    const std::string& v = s.cat(name);
    for (const char* ok : values) {
        if (v == ok) return;
    }
    throw ValueError(to_string(s.kind) + ": invalid value '" + v + "' for '" + name + "'");
}

}  // namespace

void LearnerSpec::validate() const {
    switch (kind) {
        case LearnerKind::kCart:
            check_cat(*this, "criterion", {"gini", "entropy"});
            check_cat(*this, "splitter", {"best", "random"});
            check_num(*this, "min_samples_split", 0.0, 1.0);
            break;
        case LearnerKind::kRf:
            check_num(*this, "n_estimators", 50.0, 150.0);
            check_cat(*this, "criterion", {"gini", "entropy"});
            check_num(*this, "min_samples_split", 0.0, 1.0);
            break;
        case LearnerKind::kNb:
            check_num(*this, "alpha", 0.0, 0.1);
            break;
        case LearnerKind::kKnn: {
            check_num(*this, "n_neighbors", 2.0, 25.0);
            check_cat(*this, "weights", {"uniform", "distance"});
            check_cat(*this, "metric", {"minkowski", "chebyshev"});
            if (cat("metric") == "minkowski") {
                check_num(*this, "p", 1.0, 15.0);
            } else if (num_or("p", 2.0) != 2.0) {
                throw ValueError("knn: p is fixed at 2 unless metric is minkowski");
            }
            break;
        }
        case LearnerKind::kGbt: {
            if (num("learning_rate") <= 0.0) throw ValueError("gbt: learning_rate must be positive");
            check_num(*this, "learning_rate", 0.0, 1.0);
            if (num("max_depth") < 1.0) throw ValueError("gbt: max_depth must be >= 1");
            if (num("n_estimators") < 1.0) throw ValueError("gbt: n_estimators must be >= 1");
            check_cat(*this, "booster", {"gbtree", "dart"});
            break;
        }
    }
}

std::string LearnerSpec::to_json() const {
    nlohmann::json params = nlohmann::json::object();
    for (const auto& [k, v] : num_params) params[k] = v;
    for (const auto& [k, v] : cat_params) params[k] = v;
    nlohmann::json j;
    j["kind"] = to_string(kind);
    j["params"] = params;
    return j.dump();
}

LearnerSpec LearnerSpec::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    LearnerSpec spec;
    spec.kind = learner_kind_from_string(j.at("kind").get<std::string>());
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

LearnerSpec LearnerSpec::default_cart() {
    LearnerSpec s;
    s.kind = LearnerKind::kCart;
    s.cat_params = {{"criterion", "gini"}, {"splitter", "best"}};
    s.num_params = {{"min_samples_split", 0.0}};
    return s;
}

LearnerSpec LearnerSpec::default_rf() {
    LearnerSpec s;
    s.kind = LearnerKind::kRf;
    s.cat_params = {{"criterion", "gini"}};
    s.num_params = {{"n_estimators", 100.0}, {"min_samples_split", 0.0}};
    return s;
}

LearnerSpec LearnerSpec::default_gbt() {
    LearnerSpec s;
    s.kind = LearnerKind::kGbt;
    s.cat_params = {{"booster", "gbtree"}};
    s.num_params = {{"max_depth", 3.0}, {"learning_rate", 0.1}, {"n_estimators", 100.0}};
    return s;
}

bool TrainedModel::tree_based() const {
    return std::holds_alternative<TreeModel>(impl) || std::holds_alternative<EnsembleModel>(impl);
}

TrainedModel train(const LearnerSpec& spec, const FlowDataset& data, std::uint64_t seed) {
    spec.validate();
    if (data.n_rows == 0) throw ValueError("train: empty dataset");
    if (spec.kind == LearnerKind::kNb || spec.kind == LearnerKind::kGbt) {
        std::vector<bool> seen(static_cast<std::size_t>(data.n_classes()), false);
        for (int lab : data.labels) seen[static_cast<std::size_t>(lab)] = true;
        if (!std::all_of(seen.begin(), seen.end(), [](bool b) { return b; })) {
            throw ValueError(to_string(spec.kind) + ": all classes must be present in training data");
        }
    }

    TrainedModel m;
    switch (spec.kind) {
        case LearnerKind::kCart: m = train_cart(spec, data, seed); break;
        case LearnerKind::kRf: m = train_rf(spec, data, seed); break;
        case LearnerKind::kNb: m = train_nb(spec, data); break;
        case LearnerKind::kKnn: m = train_knn(data); break;
        case LearnerKind::kGbt: m = train_gbt(spec, data, seed); break;
    }
    m.spec = spec;
    m.n_classes = data.n_classes();
    m.n_cols = data.n_cols;
    m.feature_names = data.feature_names;
    m.class_names = data.class_names;
    return m;
}

namespace {

void proba_cart(const TrainedModel& m, const FlowDataset& data, std::vector<double>& out) {
    const auto& tree = std::get<TreeModel>(m.impl);
    const auto L = static_cast<std::size_t>(m.n_classes);
    for (std::size_t r = 0; r < data.n_rows; ++r) {
        const auto& probs = tree.predict_proba(&data.features[r * data.n_cols]);
        std::copy(probs.begin(), probs.end(), out.begin() + static_cast<std::ptrdiff_t>(r * L));
    }
}

void proba_rf(const TrainedModel& m, const FlowDataset& data, std::vector<double>& out) {
    const auto& ensemble = std::get<EnsembleModel>(m.impl);
    const auto L = static_cast<std::size_t>(m.n_classes);
    for (std::size_t r = 0; r < data.n_rows; ++r) {
        const double* row = &data.features[r * data.n_cols];
        double* votes = &out[r * L];
        for (const auto& tree : ensemble.trees) {
            const auto& probs = tree.predict_proba(row);
            votes[argmax_lowest(probs.data(), m.n_classes)] += 1.0;
        }
        for (std::size_t c = 0; c < L; ++c) votes[c] /= static_cast<double>(ensemble.trees.size());
    }
}

void proba_gbt(const TrainedModel& m, const FlowDataset& data, std::vector<double>& out) {
    const auto& ensemble = std::get<EnsembleModel>(m.impl);
    const auto L = static_cast<std::size_t>(m.n_classes);
    const double lr = m.spec.num("learning_rate");
    const std::size_t n_rounds = ensemble.round_weights.size();
    for (std::size_t r = 0; r < data.n_rows; ++r) {
        const double* row = &data.features[r * data.n_cols];
        std::vector<double> scores(L, 0.0);
        for (std::size_t round = 0; round < n_rounds; ++round) {
            const double w = lr * ensemble.round_weights[round];
            for (std::size_t c = 0; c < L; ++c) {
                scores[c] += w * ensemble.trees[round * L + c].predict_value(row);
            }
        }
        const auto probs = softmax(scores);
        std::copy(probs.begin(), probs.end(), out.begin() + static_cast<std::ptrdiff_t>(r * L));
    }
}

void proba_nb(const TrainedModel& m, const FlowDataset& data, std::vector<double>& out) {
    const auto& nb = std::get<NbModel>(m.impl);
    const auto L = static_cast<std::size_t>(m.n_classes);
    const std::size_t d = m.n_cols;
    for (std::size_t r = 0; r < data.n_rows; ++r) {
        std::vector<double> log_post(L);
        for (std::size_t c = 0; c < L; ++c) {
            double lp = nb.class_log_prior[c];
            for (std::size_t f = 0; f < d; ++f) {
                const double v = std::max(0.0, data.at(r, f) - nb.shift[f]);
                lp += v * nb.feature_log_prob[c * d + f];
            }
            log_post[c] = lp;
        }
        const auto probs = softmax(log_post);
        std::copy(probs.begin(), probs.end(), out.begin() + static_cast<std::ptrdiff_t>(r * L));
    }
}

void proba_knn(const TrainedModel& m, const FlowDataset& data, std::vector<double>& out) {
    const auto& knn = std::get<KnnModel>(m.impl);
    const auto L = static_cast<std::size_t>(m.n_classes);
    const std::size_t d = m.n_cols;
    const auto k = std::min<std::size_t>(static_cast<std::size_t>(m.spec.num("n_neighbors")),
                                         knn.n_rows);
    const bool weighted = m.spec.cat("weights") == "distance";
    const bool cheb = m.spec.cat("metric") == "chebyshev";
    const double p = cheb ? 2.0 : m.spec.num("p");

    std::vector<std::pair<double, std::size_t>> dist(knn.n_rows);
    for (std::size_t r = 0; r < data.n_rows; ++r) {
        const double* row = &data.features[r * d];
        for (std::size_t i = 0; i < knn.n_rows; ++i) {
            const double* train_row = &knn.rows[i * d];
            dist[i] = {cheb ? chebyshev(row, train_row, d) : minkowski_p(row, train_row, d, p), i};
        }
        std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
        double* votes = &out[r * L];
        double total = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            const double w = weighted ? 1.0 / std::max(dist[i].first, 1e-12) : 1.0;
            votes[static_cast<std::size_t>(knn.labels[dist[i].second])] += w;
            total += w;
        }
        for (std::size_t c = 0; c < L; ++c) votes[c] /= total;
    }
}

}  // namespace

std::vector<double> predict_proba(const TrainedModel& model, const FlowDataset& data) {
    if (data.n_cols != model.n_cols) {
        throw ValueError("predict: column count " + std::to_string(data.n_cols) +
                         " does not match training count " + std::to_string(model.n_cols));
    }
    std::vector<double> out(data.n_rows * static_cast<std::size_t>(model.n_classes), 0.0);
    switch (model.spec.kind) {
        case LearnerKind::kCart: proba_cart(model, data, out); break;
        case LearnerKind::kRf: proba_rf(model, data, out); break;
        case LearnerKind::kGbt: proba_gbt(model, data, out); break;
        case LearnerKind::kNb: proba_nb(model, data, out); break;
        case LearnerKind::kKnn: proba_knn(model, data, out); break;
    }
    return out;
}

std::vector<int> predict(const TrainedModel& model, const FlowDataset& data) {
    const auto proba = predict_proba(model, data);
    std::vector<int> labels(data.n_rows);
    for (std::size_t r = 0; r < data.n_rows; ++r) {
        labels[r] = argmax_lowest(&proba[r * static_cast<std::size_t>(model.n_classes)],
                                  model.n_classes);
    }
    return labels;
}

std::vector<std::pair<std::string, double>> feature_importance(const TrainedModel& model) {
    if (!model.tree_based()) {
        throw ValueError("feature_importance: model is not tree-based");
    }
    std::vector<double> gains(model.n_cols, 0.0);
    if (const auto* tree = std::get_if<TreeModel>(&model.impl)) {
        gains = tree->gain_by_feature(model.n_cols);
    } else {
        const auto& ensemble = std::get<EnsembleModel>(model.impl);
        for (const auto& tree : ensemble.trees) {
            const auto g = tree.gain_by_feature(model.n_cols);
            for (std::size_t i = 0; i < gains.size(); ++i) gains[i] += g[i];
        }
    }
    const double total = std::accumulate(gains.begin(), gains.end(), 0.0);
    if (total > 0.0) {
        for (double& g : gains) g /= total;
    }
    std::vector<std::size_t> order(gains.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return gains[a] > gains[b]; });
    std::vector<std::pair<std::string, double>> out;
    out.reserve(order.size());
    for (std::size_t i : order) out.emplace_back(model.feature_names[i], gains[i]);
    return out;
}

std::vector<double> softmax(const std::vector<double>& scores) {
    double mx = scores[0];
    for (double s : scores) mx = std::max(mx, s);
    std::vector<double> out(scores.size());
    double z = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        out[i] = std::exp(scores[i] - mx);
        z += out[i];
    }
    for (double& v : out) v /= z;
    return out;
}

void softmax_grad_hess(const std::vector<double>& scores, int true_class,
                       std::vector<double>& grad, std::vector<double>& hess) {
    const auto p = softmax(scores);
    grad.resize(p.size());
    hess.resize(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        grad[i] = p[i] - (static_cast<int>(i) == true_class ? 1.0 : 0.0);
        hess[i] = p[i] * (1.0 - p[i]);
    }
}

double multiclass_log_loss(const std::vector<double>& scores, int true_class) {
    double mx = scores[0];
    for (double s : scores) mx = std::max(mx, s);
    double z = 0.0;
    for (double s : scores) z += std::exp(s - mx);
    return -(scores[static_cast<std::size_t>(true_class)] - mx - std::log(z));
}

std::string TrainedModel::to_json() const {
    nlohmann::json j;
    j["spec"] = nlohmann::json::parse(spec.to_json());
    j["n_classes"] = n_classes;
    j["n_cols"] = n_cols;
    j["feature_names"] = feature_names;
    j["class_names"] = class_names;
    if (const auto* tree = std::get_if<TreeModel>(&impl)) {
        nlohmann::json t;
        tree->to_json(t);
        j["model"] = {{"type", "tree"}, {"tree", std::move(t)}};
    } else if (const auto* ensemble = std::get_if<EnsembleModel>(&impl)) {
        nlohmann::json trees = nlohmann::json::array();
        for (const auto& tree : ensemble->trees) {
            nlohmann::json t;
            tree.to_json(t);
            trees.push_back(std::move(t));
        }
        j["model"] = {{"type", "ensemble"},
                      {"trees", std::move(trees)},
                      {"round_weights", ensemble->round_weights},
                      {"train_loss", ensemble->train_loss}};
    } else if (const auto* nb = std::get_if<NbModel>(&impl)) {
        j["model"] = {{"type", "nb"},
                      {"shift", nb->shift},
                      {"class_log_prior", nb->class_log_prior},
                      {"feature_log_prob", nb->feature_log_prob}};
    } else {
        const auto& knn = std::get<KnnModel>(impl);
        j["model"] = {{"type", "knn"},
                      {"rows", knn.rows},
                      {"labels", knn.labels},
                      {"n_rows", knn.n_rows}};
    }
    return j.dump();
}

TrainedModel TrainedModel::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    TrainedModel m;
    m.spec = LearnerSpec::from_json(j.at("spec").dump());
    m.n_classes = j.at("n_classes").get<int>();
    m.n_cols = j.at("n_cols").get<std::size_t>();
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    const auto& mj = j.at("model");
    const std::string type = mj.at("type").get<std::string>();
    if (type == "tree") {
        m.impl = TreeModel::from_json(mj.at("tree"));
    } else if (type == "ensemble") {
        EnsembleModel ensemble;
        for (const auto& t : mj.at("trees")) ensemble.trees.push_back(TreeModel::from_json(t));
        ensemble.round_weights = mj.at("round_weights").get<std::vector<double>>();
        ensemble.train_loss = mj.at("train_loss").get<std::vector<double>>();
        m.impl = std::move(ensemble);
    } else if (type == "nb") {
        NbModel nb;
        nb.shift = mj.at("shift").get<std::vector<double>>();
        nb.class_log_prior = mj.at("class_log_prior").get<std::vector<double>>();
        nb.feature_log_prob = mj.at("feature_log_prob").get<std::vector<double>>();
        m.impl = std::move(nb);
    } else if (type == "knn") {
        KnnModel knn;
        knn.rows = mj.at("rows").get<std::vector<double>>();
        knn.labels = mj.at("labels").get<std::vector<int>>();
        knn.n_rows = mj.at("n_rows").get<std::size_t>();
        m.impl = std::move(knn);
    } else {
        throw ValueError("unknown model type '" + type + "'");
    }
    return m;
}

}  // namespace flowtune
