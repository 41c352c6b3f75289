#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace flowtune {

// L x L confusion counts; entry (i, j) = flows of actual class j predicted as
// class i (rows = predicted, columns = actual).
struct ConfusionMatrix {
    std::vector<std::int64_t> counts;
    int L = 0;

    std::int64_t at(int pred, int actual) const { return counts[static_cast<std::size_t>(pred * L + actual)]; }
    std::int64_t& at(int pred, int actual) { return counts[static_cast<std::size_t>(pred * L + actual)]; }
    std::int64_t total() const;
};

// How the false-alarm rate denominator is computed. `kPerClassTpTn` is the
// published formula FP_i / (TP_i + TN_i) and is the default everywhere;
// `kConventional` is the textbook false-positive rate FP_i / (FP_i + TN_i),
// kept selectable for comparison.
enum class FarMode { kPerClassTpTn, kConventional };

struct Objectives {
    double recall = 0.0;
    double precision = 0.0;
    double far = 0.0;
    double f_measure = 0.0;
    double g_score = 0.0;

    std::string to_json() const;
    static Objectives from_json(const std::string& text);
};

ConfusionMatrix confusion(const std::vector<int>& actual, const std::vector<int>& predicted, int L);

Objectives macro_objectives(const ConfusionMatrix& cm, FarMode far_mode = FarMode::kPerClassTpTn);

double objective_by_name(const Objectives& o, const std::string& name);

}  // namespace flowtune
