#pragma once

#include <string>
#include <vector>

#include "sampsd/data.hpp"
#include "sampsd/linalg.hpp"
#include "sampsd/model.hpp"

namespace sampsd {

// Feature scaling state: g_scaled = Sigma^{-1/2} P^T g, with P the PCA
// projection fitted on training-set features and Sigma the covariance of
// projected clean features (reference plus dynamically collected).
struct ScalerState {
    Matrix projection;      // d x d', orthonormal columns
    Matrix sigma_inv_sqrt;  // d' x d', symmetric
    double eigen_floor = 1e-2;
    std::size_t reduced_dim = 0;
    bool degenerate = false;  // training features had (near-)zero variance
};

struct ScalerConfig {
    double variance_target = 0.999;
    std::size_t max_dim = 64;
    double eigen_floor = 1e-2;
    double confidence_threshold = 0.95;
    std::size_t cap_per_class = 100;
};

// Per class, up to cap samples predicted correctly with confidence >= the
// threshold, highest confidence first. May return nothing for a class.
std::vector<std::size_t> collect_potential_clean(const MlpModel& model, const Dataset& train_set,
                                                 std::size_t cap_per_class,
                                                 double confidence_threshold = 0.95);

ScalerState fit_scaler(const Matrix& train_features, const Matrix& clean_features,
                       double variance_target = 0.999, std::size_t max_dim = 64,
                       double eigen_floor = 1e-2);

std::vector<double> scale(const ScalerState& state, const std::vector<double>& g);

// Row-wise scale of a feature matrix.
Matrix scale_rows(const ScalerState& state, const Matrix& features);

// Serialization: magic "SCAL", u32 version, u32 d, u32 d', f64 floor, then P
// and Sigma^{-1/2} as little-endian 64-bit reals, row-major.
void save_scaler(const ScalerState& state, const std::string& path);
ScalerState load_scaler(const std::string& path);

}  // namespace sampsd
