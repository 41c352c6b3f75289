#include "metrics.hpp"

#include <numeric>

#include "common.hpp"

#include <nlohmann/json.hpp>

namespace flowtune {

std::int64_t ConfusionMatrix::total() const {
    return std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
}

ConfusionMatrix confusion(const std::vector<int>& actual, const std::vector<int>& predicted, int L) {
    if (actual.size() != predicted.size()) throw ValueError("confusion: length mismatch");
    if (L < 1) throw ValueError("confusion: class count must be >= 1");
    ConfusionMatrix cm;
    cm.L = L;
    cm.counts.assign(static_cast<std::size_t>(L) * static_cast<std::size_t>(L), 0);
    for (std::size_t i = 0; i < actual.size(); ++i) {
        if (actual[i] < 0 || actual[i] >= L || predicted[i] < 0 || predicted[i] >= L) {
            throw ValueError("confusion: label out of range");
        }
        ++cm.at(predicted[i], actual[i]);
    }
    return cm;
}

Objectives macro_objectives(const ConfusionMatrix& cm, FarMode far_mode) {
    const std::int64_t total = cm.total();
    if (total == 0) throw ValueError("macro_objectives: empty matrix");
    const int L = cm.L;

    // Zero-denominator per-class terms contribute 0 to the macro average.
    auto ratio = [](std::int64_t num, std::int64_t den) {
        return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
    };

    double recall_sum = 0.0, precision_sum = 0.0, far_sum = 0.0;
    for (int i = 0; i < L; ++i) {
        std::int64_t row_sum = 0, col_sum = 0;
        for (int j = 0; j < L; ++j) {
            row_sum += cm.at(i, j);
            col_sum += cm.at(j, i);
        }
        const std::int64_t tp = cm.at(i, i);
        const std::int64_t fp = row_sum - tp;
        const std::int64_t fn = col_sum - tp;
        const std::int64_t tn = total - tp - fp - fn;
        recall_sum += ratio(tp, tp + fn);
        precision_sum += ratio(tp, tp + fp);
        far_sum += far_mode == FarMode::kPerClassTpTn ? ratio(fp, tp + tn) : ratio(fp, fp + tn);
    }

    Objectives o;
    o.recall = recall_sum / L;
    o.precision = precision_sum / L;
    o.far = far_sum / L;
    const double pr = o.precision + o.recall;
    o.f_measure = pr == 0.0 ? 0.0 : 2.0 * o.precision * o.recall / pr;
    const double rg = o.recall + (1.0 - o.far);
    o.g_score = rg == 0.0 ? 0.0 : 2.0 * o.recall * (1.0 - o.far) / rg;
    return o;
}

std::string Objectives::to_json() const {
    nlohmann::json j;
    j["recall"] = recall;
    j["precision"] = precision;
    j["far"] = far;
    j["f_measure"] = f_measure;
    j["g_score"] = g_score;
    return j.dump();
}

Objectives Objectives::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    Objectives o;
    o.recall = j.at("recall").get<double>();
    o.precision = j.at("precision").get<double>();
    o.far = j.at("far").get<double>();
    o.f_measure = j.at("f_measure").get<double>();
    o.g_score = j.at("g_score").get<double>();
    return o;
}

double objective_by_name(const Objectives& o, const std::string& name) {
    if (name == "recall") return o.recall;
    if (name == "precision") return o.precision;
    if (name == "far") return o.far;
    if (name == "f_measure" || name == "f") return o.f_measure;
    if (name == "g_score" || name == "g") return o.g_score;
    throw ValueError("unknown objective metric '" + name + "'");
}

}  // namespace flowtune
