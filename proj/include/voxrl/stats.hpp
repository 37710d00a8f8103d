#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

namespace voxrl::stats {

struct Confusion {
    // counts[truth][pred]
    std::array<std::array<int, 2>, 2> counts{{{0, 0}, {0, 0}}};
};

struct AccuracyResult {
    double accuracy = 0.0;
    Confusion confusion;
    int total = 0;
};

AccuracyResult accuracy_confusion(std::span<const int> preds, std::span<const int> truths);

enum class McNemarMethod { exact, chi2_corrected };

struct McNemarResult {
    int b = 0;  // A correct, B wrong
    int c = 0;  // A wrong, B correct
    double statistic = 0.0;
    double p_value = 1.0;
    McNemarMethod method = McNemarMethod::exact;
};

struct PairedPredictions {
    std::vector<int> truth;
    std::vector<int> pred_a;
    std::vector<int> pred_b;
};

// Exact: two-sided binomial, p = 2 * sum_{k<=min(b,c)} C(b+c,k) / 2^(b+c),
// capped at 1; b=c=0 gives p=1. Corrected chi-square: statistic
// max(|b-c|-1, 0)^2 / (b+c), upper tail of chi-square(1) via
// erfc(sqrt(x/2)).
McNemarResult mcnemar_counts(int b, int c, McNemarMethod method);
McNemarResult mcnemar(const PairedPredictions& paired, McNemarMethod method);

const char* method_name(McNemarMethod method);

}  // namespace voxrl::stats
