#include "sampsd/detectors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sampsd/errors.hpp"

namespace sampsd {

namespace {

double sq_dist(const double* a, const double* b, std::size_t d) {
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
        const double diff = a[c] - b[c];
        s += diff * diff;
    }
    return s;
}

std::vector<std::vector<std::size_t>> group_by_class(const std::vector<int>& labels,
                                                     int num_classes) {
    std::vector<std::vector<std::size_t>> by_class(num_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= num_classes)
            throw value_error("detector: label out of range");
        by_class[static_cast<std::size_t>(labels[i])].push_back(i);
    }
    return by_class;
}

Matrix gather_rows(const Matrix& features, const std::vector<std::size_t>& idx) {
    Matrix out(idx.size(), features.cols);
    for (std::size_t i = 0; i < idx.size(); ++i)
        std::copy(features.row_ptr(idx[i]), features.row_ptr(idx[i]) + features.cols,
                  out.row_ptr(i));
    return out;
}

std::vector<double> rows_mean(const Matrix& m) {
    return column_means(m);
}

void center_rows(Matrix& m, const std::vector<double>& mu) {
    for (std::size_t i = 0; i < m.rows; ++i) {
        double* row = m.row_ptr(i);
        for (std::size_t c = 0; c < m.cols; ++c) row[c] -= mu[c];
    }
}

// Flag the `count` highest scorers among `idx` (ties broken by index order).
void flag_top(const std::vector<std::size_t>& idx, const std::vector<double>& scores,
              std::size_t count, std::vector<bool>& flags) {
    std::vector<std::size_t> order(idx.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores[idx[a]] > scores[idx[b]];
    });
    for (std::size_t i = 0; i < std::min(count, order.size()); ++i) flags[idx[order[i]]] = true;
}

}  // namespace

TwoMeans two_means(const Matrix& points, Rng rng, int restarts, int max_iters) {
    const std::size_t n = points.rows;
    const std::size_t d = points.cols;
    if (n < 2) throw value_error("two_means: need at least 2 points");

    TwoMeans best;
    best.inertia = -1.0;
    for (int restart = 0; restart < restarts; ++restart) {
        Rng r = rng.stream("restart", static_cast<std::uint64_t>(restart));

        // k-means++: first center uniform, second weighted by squared distance.
        const std::size_t first = static_cast<std::size_t>(r.uniform_index(n));
        std::vector<double> c0(points.row_ptr(first), points.row_ptr(first) + d);
        std::vector<double> dist_sq(n);
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            dist_sq[i] = sq_dist(points.row_ptr(i), c0.data(), d);
            total += dist_sq[i];
        }
        std::size_t second = first;
        if (total > 0.0) {
            double pick = r.uniform() * total;
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                acc += dist_sq[i];
                if (acc >= pick) {
                    second = i;
                    break;
                }
            }
        } else {
            second = (first + 1) % n;  // all points identical
        }
        std::vector<double> c1(points.row_ptr(second), points.row_ptr(second) + d);

        std::vector<int> assign(n, 0);
        for (int iter = 0; iter < max_iters; ++iter) {
            bool changed = false;
            std::size_t n0 = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const double d0 = sq_dist(points.row_ptr(i), c0.data(), d);
                const double d1 = sq_dist(points.row_ptr(i), c1.data(), d);
                const int a = d1 < d0 ? 1 : 0;
                if (a != assign[i]) {
                    assign[i] = a;
                    changed = true;
                }
                n0 += a == 0 ? 1 : 0;
            }

            // An emptied cluster gets re-seeded with the point farthest from
            // the surviving center.
            if (n0 == 0 || n0 == n) {
                std::size_t far = 0;
                double far_d = -1.0;
                const std::vector<double>& live = n0 == 0 ? c1 : c0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double dd = sq_dist(points.row_ptr(i), live.data(), d);
                    if (dd > far_d) {
                        far_d = dd;
                        far = i;
                    }
                }
                assign[far] = n0 == 0 ? 0 : 1;
                changed = true;
            }

            std::vector<double> m0(d, 0.0), m1(d, 0.0);
            std::size_t k0 = 0, k1 = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const double* row = points.row_ptr(i);
                if (assign[i] == 0) {
                    for (std::size_t c = 0; c < d; ++c) m0[c] += row[c];
                    ++k0;
                } else {
                    for (std::size_t c = 0; c < d; ++c) m1[c] += row[c];
                    ++k1;
                }
            }
            for (std::size_t c = 0; c < d; ++c) {
                m0[c] /= static_cast<double>(k0);
                m1[c] /= static_cast<double>(k1);
            }
            c0 = std::move(m0);
            c1 = std::move(m1);
            if (!changed) break;
        }

        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            inertia += sq_dist(points.row_ptr(i), (assign[i] == 0 ? c0 : c1).data(), d);
        if (best.inertia < 0.0 || inertia < best.inertia) {
            best.inertia = inertia;
            best.assignment = assign;
            best.centroid0 = c0;
            best.centroid1 = c1;
        }
    }
    return best;
}

DetectionResult detect_ac(const Matrix& features, const std::vector<int>& labels, int num_classes,
                          Rng rng) {
    if (features.rows != labels.size()) throw dimension_error("detect_ac: label count mismatch");
    DetectionResult result;
    result.detector = "ac";
    result.scores.assign(features.rows, 0.0);
    result.flags.assign(features.rows, false);

    const auto by_class = group_by_class(labels, num_classes);
    for (int cls = 0; cls < num_classes; ++cls) {
        const auto& idx = by_class[static_cast<std::size_t>(cls)];
        ClassDiagnostics diag;
        diag.cls = cls;
        if (idx.size() < 2) {
            diag.note = "skipped: class size < 2";
            result.diagnostics.push_back(diag);
            continue;
        }

        const Matrix pts = gather_rows(features, idx);
        const TwoMeans km =
            two_means(pts, rng.stream("ac_class", static_cast<std::uint64_t>(cls)));

        std::size_t n1 = 0;
        for (int a : km.assignment) n1 += a;
        const std::size_t n0 = idx.size() - n1;
        // The minority cluster is the suspect; on a tie, cluster 1.
        const int minority = n0 < n1 ? 0 : 1;
        const std::vector<double>& c_min = minority == 0 ? km.centroid0 : km.centroid1;
        const std::vector<double>& c_maj = minority == 0 ? km.centroid1 : km.centroid0;
        diag.cluster_small = std::min(n0, n1);
        diag.cluster_large = std::max(n0, n1);

        for (std::size_t i = 0; i < idx.size(); ++i) {
            const double d_min = std::sqrt(sq_dist(pts.row_ptr(i), c_min.data(), pts.cols));
            const double d_maj = std::sqrt(sq_dist(pts.row_ptr(i), c_maj.data(), pts.cols));
            const double denom = d_min + d_maj;
            result.scores[idx[i]] = denom > 0.0 ? d_maj / denom : 0.5;
        }

        const double small_fraction =
            static_cast<double>(diag.cluster_small) / static_cast<double>(idx.size());
        if (small_fraction < 0.35 && diag.cluster_small > 0) {
            for (std::size_t i = 0; i < idx.size(); ++i)
                if (km.assignment[i] == minority) {
                    result.flags[idx[i]] = true;
                    ++diag.flag_count;
                }
        }
        result.diagnostics.push_back(diag);
    }
    return result;
}

DetectionResult detect_ss(const Matrix& features, const std::vector<int>& labels, int num_classes,
                          double expected_fraction, Rng rng) {
    if (features.rows != labels.size()) throw dimension_error("detect_ss: label count mismatch");
    if (!(expected_fraction > 0.0 && expected_fraction < 0.5))
        throw value_error("detect_ss: expected fraction must be in (0, 0.5)");
    DetectionResult result;
    result.detector = "ss";
    result.scores.assign(features.rows, 0.0);
    result.flags.assign(features.rows, false);

    const auto by_class = group_by_class(labels, num_classes);
    for (int cls = 0; cls < num_classes; ++cls) {
        const auto& idx = by_class[static_cast<std::size_t>(cls)];
        ClassDiagnostics diag;
        diag.cls = cls;
        if (idx.size() < 2) {
            diag.note = "skipped: class size < 2";
            result.diagnostics.push_back(diag);
            continue;
        }

        Matrix pts = gather_rows(features, idx);
        const std::vector<double> mu = rows_mean(pts);
        center_rows(pts, mu);
        const Matrix v =
            top_singular_directions(pts, 1, rng.stream("ss_class", static_cast<std::uint64_t>(cls)));
        for (std::size_t i = 0; i < idx.size(); ++i) {
            double proj = 0.0;
            const double* row = pts.row_ptr(i);
            for (std::size_t c = 0; c < pts.cols; ++c) proj += row[c] * v(c, 0);
            result.scores[idx[i]] = proj * proj;
        }

        const std::size_t count = std::min(
            static_cast<std::size_t>(
                std::ceil(1.5 * expected_fraction * static_cast<double>(idx.size()))),
            idx.size());
        flag_top(idx, result.scores, count, result.flags);
        diag.flag_count = count;
        result.diagnostics.push_back(diag);
    }
    return result;
}

namespace {

// Sum of squared projections of (x - mu) onto each column of dirs.
double subspace_score(const double* row, const std::vector<double>& mu, const Matrix& dirs) {
    double total = 0.0;
    for (std::size_t j = 0; j < dirs.cols; ++j) {
        double proj = 0.0;
        for (std::size_t c = 0; c < dirs.rows; ++c) proj += (row[c] - mu[c]) * dirs(c, j);
        total += proj * proj;
    }
    return total;
}

}  // namespace

DetectionResult detect_spectre_lite(const Matrix& features, const std::vector<int>& labels,
                                    int num_classes, double expected_fraction,
                                    std::size_t subspace_k, Rng rng) {
    if (features.rows != labels.size())
        throw dimension_error("detect_spectre_lite: label count mismatch");
    if (!(expected_fraction > 0.0 && expected_fraction < 0.5))
        throw value_error("detect_spectre_lite: expected fraction must be in (0, 0.5)");
    if (subspace_k == 0) throw value_error("detect_spectre_lite: subspace_k must be >= 1");

    DetectionResult result;
    result.detector = "spectre_lite";
    result.scores.assign(features.rows, 0.0);
    result.flags.assign(features.rows, false);

    const auto by_class = group_by_class(labels, num_classes);
    for (int cls = 0; cls < num_classes; ++cls) {
        const auto& idx = by_class[static_cast<std::size_t>(cls)];
        ClassDiagnostics diag;
        diag.cls = cls;
        if (idx.size() < 2) {
            diag.note = "skipped: class size < 2";
            result.diagnostics.push_back(diag);
            continue;
        }

        Rng class_rng = rng.stream("spectre_class", static_cast<std::uint64_t>(cls));
        std::vector<std::size_t> kept = idx;
        bool fell_back = false;
        std::vector<double> mu;
        Matrix dirs;
        for (int round = 0; round < 3; ++round) {
            Matrix pts = gather_rows(features, kept);
            mu = rows_mean(pts);
            center_rows(pts, mu);
            const std::size_t k_eff = std::min({subspace_k, kept.size(), features.cols});
            dirs = top_singular_directions(pts, k_eff,
                                           class_rng.stream("round", static_cast<std::uint64_t>(round)));

            std::vector<std::pair<double, std::size_t>> scored(kept.size());
            for (std::size_t i = 0; i < kept.size(); ++i)
                scored[i] = {subspace_score(features.row_ptr(kept[i]), mu, dirs), kept[i]};
            std::stable_sort(scored.begin(), scored.end(),
                             [](const auto& a, const auto& b) { return a.first > b.first; });
            const std::size_t drop =
                static_cast<std::size_t>(std::ceil(0.1 * static_cast<double>(kept.size())));
            if (kept.size() <= drop + 1 || kept.size() - drop < 2) {
                fell_back = true;
                break;
            }
            kept.clear();
            for (std::size_t i = drop; i < scored.size(); ++i) kept.push_back(scored[i].second);
            std::sort(kept.begin(), kept.end());
        }

        if (fell_back) {
            // Too few samples to trim robustly: plain spectral scoring.
            diag.note = "fallback_ss";
            Matrix pts = gather_rows(features, idx);
            mu = rows_mean(pts);
            center_rows(pts, mu);
            dirs = top_singular_directions(pts, 1, class_rng.stream("fallback"));
            for (std::size_t i = 0; i < idx.size(); ++i)
                result.scores[idx[i]] = subspace_score(features.row_ptr(idx[i]), mu, dirs);
        } else {
            // Final scores from the robust estimate: the center comes from the
            // trimmed set, while the scoring directions are taken over the
            // whole class centered there, so the contamination direction
            // itself stays visible (directions fitted only to the trimmed
            // remainder degenerate to noise once the features are whitened).
            Matrix pts = gather_rows(features, kept);
            mu = rows_mean(pts);
            Matrix all = gather_rows(features, idx);
            center_rows(all, mu);
            const std::size_t k_eff = std::min({subspace_k, idx.size(), features.cols});
            dirs = top_singular_directions(all, k_eff, class_rng.stream("final"));
            for (std::size_t i = 0; i < idx.size(); ++i)
                result.scores[idx[i]] = subspace_score(features.row_ptr(idx[i]), mu, dirs);
        }

        const std::size_t count = std::min(
            static_cast<std::size_t>(
                std::ceil(1.5 * expected_fraction * static_cast<double>(idx.size()))),
            idx.size());
        flag_top(idx, result.scores, count, result.flags);
        diag.flag_count = count;
        result.diagnostics.push_back(diag);
    }
    return result;
}

namespace {

double median_of(std::vector<double> v) {
    const std::size_t n = v.size();
    const std::size_t mid = n / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    double med = v[mid];
    if (n % 2 == 0) {
        const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
        med = 0.5 * (med + lower);
    }
    return med;
}

// Linearly interpolated quantile, q in [0, 1].
double quantile_of(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    if (v.size() == 1) return v[0];
    const double pos = q * static_cast<double>(v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    const double t = pos - static_cast<double>(lo);
    return v[lo] + (v[hi] - v[lo]) * t;
}

// Moment statistics per order: mean of |g_i|^q over feature dimensions.
std::vector<double> gram_moments(const double* row, std::size_t d, const std::vector<int>& orders) {
    std::vector<double> out(orders.size(), 0.0);
    for (std::size_t c = 0; c < d; ++c) {
        const double a = std::abs(row[c]);
        for (std::size_t q = 0; q < orders.size(); ++q) out[q] += std::pow(a, orders[q]);
    }
    for (double& v : out) v /= static_cast<double>(d);
    return out;
}

}  // namespace

DetectionResult detect_gram(const Matrix& features, const std::vector<int>& labels,
                            int num_classes, const Matrix& reference_features,
                            const std::vector<int>& reference_labels, double target_fpr,
                            const std::vector<int>& orders) {
    if (features.rows != labels.size()) throw dimension_error("detect_gram: label count mismatch");
    if (reference_features.rows != reference_labels.size())
        throw dimension_error("detect_gram: reference label count mismatch");
    if (reference_features.cols != features.cols)
        throw dimension_error("detect_gram: feature dimensions disagree");
    if (!(target_fpr > 0.0 && target_fpr < 1.0))
        throw value_error("detect_gram: target fpr must be in (0, 1)");
    if (orders.empty()) throw value_error("detect_gram: need at least one moment order");

    DetectionResult result;
    result.detector = "gram";
    result.scores.assign(features.rows, 0.0);
    result.flags.assign(features.rows, false);

    const auto by_class = group_by_class(labels, num_classes);
    const auto ref_by_class = group_by_class(reference_labels, num_classes);
    const std::size_t d = features.cols;

    for (int cls = 0; cls < num_classes; ++cls) {
        const auto& idx = by_class[static_cast<std::size_t>(cls)];
        const auto& ref_idx = ref_by_class[static_cast<std::size_t>(cls)];
        if (ref_idx.empty()) throw value_error("detect_gram: reference class is empty");

        ClassDiagnostics diag;
        diag.cls = cls;

        // Reference medians and MADs per order.
        std::vector<std::vector<double>> ref_stats(ref_idx.size());
        for (std::size_t i = 0; i < ref_idx.size(); ++i)
            ref_stats[i] = gram_moments(reference_features.row_ptr(ref_idx[i]), d, orders);

        std::vector<double> med(orders.size()), mad(orders.size());
        for (std::size_t q = 0; q < orders.size(); ++q) {
            std::vector<double> col(ref_idx.size());
            for (std::size_t i = 0; i < ref_idx.size(); ++i) col[i] = ref_stats[i][q];
            med[q] = median_of(col);
            for (double& v : col) v = std::abs(v - med[q]);
            mad[q] = median_of(col);
        }

        auto score_of = [&](const std::vector<double>& stats) {
            double s = 0.0;
            for (std::size_t q = 0; q < orders.size(); ++q)
                s += std::abs(stats[q] - med[q]) / (mad[q] + 1e-12);
            return s;
        };

        // Threshold calibrated on the reference scores themselves.
        std::vector<double> ref_scores(ref_idx.size());
        for (std::size_t i = 0; i < ref_idx.size(); ++i) ref_scores[i] = score_of(ref_stats[i]);
        diag.threshold = quantile_of(ref_scores, 1.0 - target_fpr);

        for (std::size_t i : idx) {
            const double s = score_of(gram_moments(features.row_ptr(i), d, orders));
            result.scores[i] = s;
            if (s > diag.threshold) {
                result.flags[i] = true;
                ++diag.flag_count;
            }
        }
        result.diagnostics.push_back(diag);
    }
    return result;
}

}  // namespace sampsd
