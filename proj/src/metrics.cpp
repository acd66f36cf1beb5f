#include "sampsd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sampsd/errors.hpp"

namespace sampsd {

MetricReport confusion(const std::vector<bool>& flags, const std::vector<bool>& truth) {
    if (flags.size() != truth.size()) throw dimension_error("confusion: length mismatch");
    MetricReport r;
    for (std::size_t i = 0; i < flags.size(); ++i) {
        if (truth[i])
            flags[i] ? ++r.tp : ++r.fn;
        else
            flags[i] ? ++r.fp : ++r.tn;
    }
    if (r.tp + r.fn > 0) r.tpr = static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn);
    if (r.fp + r.tn > 0) r.fpr = static_cast<double>(r.fp) / static_cast<double>(r.fp + r.tn);
    if (2 * r.tp + r.fp + r.fn > 0)
        r.f1 = 2.0 * static_cast<double>(r.tp) / static_cast<double>(2 * r.tp + r.fp + r.fn);
    return r;
}

double auc(const std::vector<double>& scores, const std::vector<bool>& truth) {
    if (scores.size() != truth.size()) throw dimension_error("auc: length mismatch");
    const std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (bool t : truth) n_pos += t ? 1 : 0;
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw undefined_metric_error("auc: needs both positive and negative samples");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Mid-rank assignment over tie groups.
    std::vector<double> rank(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double mid = 0.5 * static_cast<double>(i + j) + 1.0;  // ranks are 1-based
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
        i = j + 1;
    }

    double rank_sum_pos = 0.0;
    for (std::size_t k = 0; k < n; ++k)
        if (truth[k]) rank_sum_pos += rank[k];
    const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) * (n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw dimension_error("pearson: length mismatch");
    const std::size_t n = x.size();
    if (n < 2) throw value_error("pearson: need at least 2 points");
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0)
        throw undefined_metric_error("pearson: zero variance input");
    return sxy / std::sqrt(sxx * syy);
}

double r_squared(const std::vector<double>& x, const std::vector<double>& y) {
    const double r = pearson(x, y);
    return r * r;
}

}  // namespace sampsd
