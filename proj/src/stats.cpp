#include "voxrl/stats.hpp"

#include <cmath>
#include <stdexcept>

namespace voxrl::stats {

AccuracyResult accuracy_confusion(std::span<const int> preds, std::span<const int> truths) {
    if (preds.size() != truths.size())
        throw std::invalid_argument("accuracy_confusion: length mismatch (" +
                                    std::to_string(preds.size()) + " vs " +
                                    std::to_string(truths.size()) + ")");
    if (preds.empty()) throw std::invalid_argument("accuracy_confusion: empty input");

    AccuracyResult r;
    r.total = int(preds.size());
    int correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const int p = preds[i], t = truths[i];
        if ((p != 0 && p != 1) || (t != 0 && t != 1))
            throw std::invalid_argument("accuracy_confusion: values must be 0 or 1");
        r.confusion.counts[std::size_t(t)][std::size_t(p)]++;
        if (p == t) ++correct;
    }
    r.accuracy = double(correct) / double(r.total);
    return r;
}

namespace {

// log C(n,k)
double lchoose(int n, int k) {
    return std::lgamma(double(n) + 1.0) - std::lgamma(double(k) + 1.0) -
           std::lgamma(double(n - k) + 1.0);
}

double exact_p(int b, int c) {
    const int n = b + c;
    if (n == 0) return 1.0;
    const int m = std::min(b, c);
    double p = 0.0;
    const double log_half_n = double(n) * std::log(0.5);
    for (int k = 0; k <= m; ++k) p += std::exp(lchoose(n, k) + log_half_n);
    p *= 2.0;
    return p > 1.0 ? 1.0 : p;
}

}  // namespace

McNemarResult mcnemar_counts(int b, int c, McNemarMethod method) {
    if (b < 0 || c < 0) throw std::invalid_argument("mcnemar: counts must be >= 0");
    McNemarResult r;
    r.b = b;
    r.c = c;
    r.method = method;
    if (method == McNemarMethod::exact) {
        r.statistic = double(std::min(b, c));
        r.p_value = exact_p(b, c);
        return r;
    }
    const int n = b + c;
    if (n == 0) {
        r.statistic = 0.0;
        r.p_value = 1.0;
        return r;
    }
    // continuity correction clamped at zero so it cannot flip the sign
    const double d = std::max(std::fabs(double(b) - double(c)) - 1.0, 0.0);
    r.statistic = d * d / double(n);
    r.p_value = std::erfc(std::sqrt(r.statistic / 2.0));  // chi-square(1) upper tail
    return r;
}

McNemarResult mcnemar(const PairedPredictions& paired, McNemarMethod method) {
    const auto n = paired.truth.size();
    if (n == 0) throw std::invalid_argument("mcnemar: empty predictions");
    if (paired.pred_a.size() != n || paired.pred_b.size() != n)
        throw std::invalid_argument("mcnemar: prediction vectors must align");
    int b = 0, c = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const bool a_ok = paired.pred_a[i] == paired.truth[i];
        const bool b_ok = paired.pred_b[i] == paired.truth[i];
        if (a_ok && !b_ok) ++b;
        if (!a_ok && b_ok) ++c;
    }
    return mcnemar_counts(b, c, method);
}

const char* method_name(McNemarMethod method) {
    return method == McNemarMethod::exact ? "exact" : "chi2_corrected";
}

}  // namespace voxrl::stats
