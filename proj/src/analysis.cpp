#include "sampsd/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sampsd/errors.hpp"

namespace sampsd {

TacProfile tac(const MlpModel& model, const Dataset& clean_set, const TriggerSpec& trigger,
               int layer) {
    if (layer != 0) throw dimension_error("tac: this model has a single hidden layer (0)");
    if (clean_set.size() == 0) throw value_error("tac: clean set is empty");
    trigger.validate(clean_set.shape);

    TacProfile profile;
    profile.layer = layer;
    profile.clean_set_size = clean_set.size();
    profile.values.assign(model.hidden_dim, 0.0);

    for (const auto& s : clean_set.samples) {
        const ForwardResult clean = forward(model, s.pixels);
        const std::vector<double> trig_px = apply_trigger(s.pixels, clean_set.shape, trigger);
        const ForwardResult trig = forward(model, trig_px);
        for (std::size_t j = 0; j < model.hidden_dim; ++j)
            profile.values[j] += std::abs(clean.hidden[j] - trig.hidden[j]);
    }
    const double inv = 1.0 / static_cast<double>(clean_set.size());
    for (double& v : profile.values) v *= inv;
    return profile;
}

double topk_tac(const TacProfile& profile, std::size_t k) {
    if (k == 0) throw value_error("topk_tac: K must be >= 1");
    if (k > profile.values.size()) throw dimension_error("topk_tac: K exceeds neuron count");
    std::vector<double> sorted = profile.values;
    std::partial_sort(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k),
                      sorted.end(), std::greater<double>());
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) sum += sorted[i];
    return sum / static_cast<double>(k);
}

std::vector<double> weight_norms(const MlpModel& model) {
    std::vector<double> norms(model.hidden_dim);
    for (std::size_t j = 0; j < model.hidden_dim; ++j) {
        const double* row = model.w1.row_ptr(j);
        double s = 0.0;
        for (std::size_t c = 0; c < model.input_dim; ++c) s += row[c] * row[c];
        norms[j] = std::sqrt(s);
    }
    return norms;
}

std::string tac_csv(const TacProfile& profile, const std::vector<double>& norms) {
    if (norms.size() != profile.values.size())
        throw dimension_error("tac_csv: norm count does not match neuron count");
    std::ostringstream out;
    out << "neuron_index,tac,weight_norm\n";
    for (std::size_t j = 0; j < profile.values.size(); ++j)
        out << j << "," << profile.values[j] << "," << norms[j] << "\n";
    return out.str();
}

std::vector<double> intra_class_variance(const Matrix& features, const std::vector<int>& labels,
                                         int num_classes) {
    if (features.rows != labels.size())
        throw dimension_error("intra_class_variance: label count mismatch");
    std::vector<double> out(num_classes, 0.0);
    const std::size_t d = features.cols;
    for (int cls = 0; cls < num_classes; ++cls) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == cls) idx.push_back(i);
        if (idx.empty()) throw value_error("intra_class_variance: empty class");
        if (idx.size() == 1) {
            out[cls] = 0.0;  // singleton class: variance defined as 0
            continue;
        }
        // Two-pass population variance per dimension, averaged across dims.
        std::vector<double> mean(d, 0.0);
        for (std::size_t i : idx) {
            const double* row = features.row_ptr(i);
            for (std::size_t c = 0; c < d; ++c) mean[c] += row[c];
        }
        for (double& v : mean) v /= static_cast<double>(idx.size());
        double total = 0.0;
        for (std::size_t i : idx) {
            const double* row = features.row_ptr(i);
            for (std::size_t c = 0; c < d; ++c) {
                const double diff = row[c] - mean[c];
                total += diff * diff;
            }
        }
        out[cls] = total / (static_cast<double>(idx.size()) * static_cast<double>(d));
    }
    return out;
}

namespace {

double row_distance(const Matrix& m, std::size_t i, std::size_t j) {
    const double* a = m.row_ptr(i);
    const double* b = m.row_ptr(j);
    double s = 0.0;
    for (std::size_t c = 0; c < m.cols; ++c) {
        const double diff = a[c] - b[c];
        s += diff * diff;
    }
    return std::sqrt(s);
}

}  // namespace

double silhouette(const Matrix& features, const std::vector<bool>& in_group_a) {
    const std::size_t n = features.rows;
    if (in_group_a.size() != n) throw dimension_error("silhouette: flag count mismatch");
    std::size_t n_a = 0;
    for (bool f : in_group_a) n_a += f ? 1 : 0;
    const std::size_t n_b = n - n_a;
    if (n_a == 0 || n_b == 0) throw value_error("silhouette: both groups must be non-empty");
    if (n < 3) throw value_error("silhouette: need at least 3 points");

    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t own = in_group_a[i] ? n_a : n_b;
        if (own == 1) continue;  // singleton silhouette defined as 0
        double intra = 0.0, inter = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double dist = row_distance(features, i, j);
            if (in_group_a[j] == in_group_a[i])
                intra += dist;
            else
                inter += dist;
        }
        const double a = intra / static_cast<double>(own - 1);
        const double b = inter / static_cast<double>(n - own);
        const double denom = std::max(a, b);
        if (denom > 0.0) sum += (b - a) / denom;
    }
    return sum / static_cast<double>(n);
}

CenterDistances center_distances(const Matrix& features, const std::vector<int>& labels,
                                 int target_class, const std::vector<bool>& clean_flags) {
    const std::size_t n = features.rows;
    if (labels.size() != n || clean_flags.size() != n)
        throw dimension_error("center_distances: input length mismatch");

    std::vector<double> center(features.cols, 0.0);
    std::size_t n_center = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!clean_flags[i] || labels[i] != target_class) continue;
        const double* row = features.row_ptr(i);
        for (std::size_t c = 0; c < features.cols; ++c) center[c] += row[c];
        ++n_center;
    }
    if (n_center == 0) throw value_error("center_distances: no clean target-class samples");
    for (double& v : center) v /= static_cast<double>(n_center);

    auto dist_to_center = [&](std::size_t i) {
        const double* row = features.row_ptr(i);
        double s = 0.0;
        for (std::size_t c = 0; c < features.cols; ++c) {
            const double diff = row[c] - center[c];
            s += diff * diff;
        }
        return std::sqrt(s);
    };

    CenterDistances out;
    for (std::size_t i = 0; i < n; ++i) {
        if (clean_flags[i] && labels[i] == target_class)
            out.clean.push_back(dist_to_center(i));
        else if (!clean_flags[i])
            out.poisoned.push_back(dist_to_center(i));
    }
    return out;
}

}  // namespace sampsd
