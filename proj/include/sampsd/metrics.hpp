#pragma once

#include <cstddef>
#include <optional>
#include <vector>

namespace sampsd {

struct MetricReport {
    std::optional<double> tpr;
    std::optional<double> fpr;
    std::optional<double> f1;
    std::optional<double> auc;
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

// TPR/FPR/F1 from binary flags against ground truth. Any 0/0 is reported as
// n/a (empty optional), never as 0, so averages can skip it.
MetricReport confusion(const std::vector<bool>& flags, const std::vector<bool>& truth);

// Mann-Whitney rank AUC with mid-ranked ties. Throws undefined_metric_error
// if either class is absent.
double auc(const std::vector<double>& scores, const std::vector<bool>& truth);

// Sample Pearson correlation. Throws undefined_metric_error on zero variance.
double pearson(const std::vector<double>& x, const std::vector<double>& y);

// R^2 of the simple linear regression of y on x (= pearson^2).
double r_squared(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace sampsd
