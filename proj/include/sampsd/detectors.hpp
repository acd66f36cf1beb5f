#pragma once

#include <string>
#include <vector>

#include "sampsd/linalg.hpp"
#include "sampsd/rng.hpp"

namespace sampsd {

struct ClassDiagnostics {
    int cls = 0;
    std::size_t cluster_small = 0;  // AC cluster sizes
    std::size_t cluster_large = 0;
    double threshold = 0.0;  // gram per-class threshold
    std::size_t flag_count = 0;
    std::string note;  // "skipped", "fallback_ss", ...
};

// Per-sample suspicion scores (higher = more suspect) and binary flags.
struct DetectionResult {
    std::string detector;
    std::vector<double> scores;
    std::vector<bool> flags;
    std::vector<ClassDiagnostics> diagnostics;
};

// 2-means with k-means++ init, restarts, and lowest-inertia selection.
struct TwoMeans {
    std::vector<int> assignment;
    std::vector<double> centroid0;
    std::vector<double> centroid1;
    double inertia = 0.0;
};
TwoMeans two_means(const Matrix& points, Rng rng, int restarts = 10, int max_iters = 100);

// Activation Clustering: per class, split features in two; if the smaller
// cluster holds under 35% of the class, flag its members. Scores rank samples
// by relative closeness to the minority centroid.
DetectionResult detect_ac(const Matrix& features, const std::vector<int>& labels, int num_classes,
                          Rng rng);

// Spectral Signature: per class, squared projection onto the top singular
// direction of the centered class features; flag the top
// ceil(1.5 * eps * n_class) scorers.
DetectionResult detect_ss(const Matrix& features, const std::vector<int>& labels, int num_classes,
                          double expected_fraction, Rng rng);

// Trimmed-spectral variant: iteratively drop the top-scoring 10% (3 rounds)
// before the final spectral scoring, over a small subspace instead of one
// direction. Falls back to detect_ss scoring for a class that gets too small.
DetectionResult detect_spectre_lite(const Matrix& features, const std::vector<int>& labels,
                                    int num_classes, double expected_fraction,
                                    std::size_t subspace_k, Rng rng);

// Gram-statistics detector: per class and moment order q, the deviation of
// mean |g|^q from the reference median in reference-MAD units; the score sums
// deviations over orders, thresholded at the (1 - target_fpr) quantile of
// reference scores.
DetectionResult detect_gram(const Matrix& features, const std::vector<int>& labels,
                            int num_classes, const Matrix& reference_features,
                            const std::vector<int>& reference_labels, double target_fpr = 0.05,
                            const std::vector<int>& orders = {1, 2, 3, 4});

}  // namespace sampsd
