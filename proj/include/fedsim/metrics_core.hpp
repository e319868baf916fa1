#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

#include "fedsim/errors.hpp"

namespace fedsim {

struct BinaryMetrics {
    double accuracy = 0.0;
    double f1 = 0.0;                  // positive class
    std::optional<double> roc_auc;    // absent when only one class present
    double log_loss = 0.0;
};

inline double clip_prob(double p) { return std::clamp(p, 1e-15, 1.0 - 1e-15); }

/// Mann-Whitney ROC AUC: ties between a positive and a negative score
/// count one half.
inline std::optional<double> roc_auc(const std::vector<int>& y, const std::vector<double>& s) {
    std::size_t pos = 0, neg = 0;
    for (int v : y) (v == 1 ? pos : neg)++;
    if (pos == 0 || neg == 0) return std::nullopt;

    std::vector<std::size_t> order(y.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return s[a] < s[b]; });

    // average ranks within tie groups, then U statistic from rank sum
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && s[order[j]] == s[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based
        for (std::size_t k = i; k < j; ++k) {
            if (y[order[k]] == 1) rank_sum_pos += avg_rank;
        }
        i = j;
    }
    const double u = rank_sum_pos - 0.5 * static_cast<double>(pos) * (pos + 1);
    return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

/// Threshold metrics plus ranking/calibration metrics for a binary
/// problem with labels in {0, 1} and scores = p(class 1).
inline BinaryMetrics binary_metrics_core(const std::vector<int>& y, const std::vector<double>& s,
                                         double threshold = 0.5) {
    if (y.empty()) throw EmptyInputError("binary_metrics: empty trace");
    if (y.size() != s.size()) throw ShapeError("binary_metrics: labels/scores size mismatch");
    BinaryMetrics m;
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    double ll = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const int pred = s[i] >= threshold ? 1 : 0;
        if (y[i] == 1 && pred == 1) ++tp;
        if (y[i] == 0 && pred == 1) ++fp;
        if (y[i] == 0 && pred == 0) ++tn;
        if (y[i] == 1 && pred == 0) ++fn;
        // clip the true-class probability itself so one example can cost
        // at most -log(1e-15)
        const double p_true = y[i] == 1 ? s[i] : 1.0 - s[i];
        ll -= std::log(clip_prob(p_true));
    }
    const double n = static_cast<double>(y.size());
    m.accuracy = static_cast<double>(tp + tn) / n;
    const double denom = 2.0 * tp + fp + fn;
    m.f1 = denom > 0.0 ? 2.0 * static_cast<double>(tp) / denom : 0.0;
    m.log_loss = ll / n;
    m.roc_auc = roc_auc(y, s);
    return m;
}

}  // namespace fedsim
