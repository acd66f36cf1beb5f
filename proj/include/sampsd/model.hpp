#pragma once

#include <string>
#include <vector>

#include "sampsd/data.hpp"
#include "sampsd/linalg.hpp"
#include "sampsd/rng.hpp"

namespace sampsd {

// Two-layer ReLU network: logits = W2 * relu(W1 x + b1) + b2. The hidden
// activations double as the feature extractor used by every detector.
struct MlpModel {
    std::size_t input_dim = 0;
    std::size_t hidden_dim = 0;
    std::size_t num_classes = 0;
    Matrix w1;               // hidden x input
    std::vector<double> b1;  // hidden
    Matrix w2;               // classes x hidden
    std::vector<double> b2;  // classes

    bool shapes_consistent() const;
};

struct Gradients {
    Matrix w1;
    std::vector<double> b1;
    Matrix w2;
    std::vector<double> b2;

    static Gradients zeros_like(const MlpModel& m);
    void scale(double factor);
};

struct ForwardResult {
    std::vector<double> hidden;  // post-ReLU
    std::vector<double> logits;
};

// Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)], seeded.
MlpModel init_mlp(std::size_t input_dim, std::size_t hidden_dim, std::size_t num_classes,
                  Rng rng);

ForwardResult forward(const MlpModel& model, const std::vector<double>& x);

std::vector<double> softmax(const std::vector<double>& logits);

// -log softmax(logits)[label], max-subtracted for stability.
double loss_ce(const std::vector<double>& logits, int label);

// Exact analytic gradient of loss_ce(forward(x), label) for one sample.
// ReLU subgradient at 0 is 0.
Gradients backward(const MlpModel& model, const std::vector<double>& x, int label);

// Mean gradient and mean loss over a batch, accumulated sample-by-sample in
// index order and scaled once at the end, so the result is bit-identical to
// averaging per-sample backward() calls.
double batch_gradients(const MlpModel& model, const Matrix& inputs,
                       const std::vector<int>& labels, Gradients& out);

// Row i = hidden activations of sample i.
Matrix extract_features(const MlpModel& model, const Dataset& ds);

// Predicted label and softmax confidence per sample.
struct Prediction {
    int label;
    double confidence;
};
std::vector<Prediction> predict(const MlpModel& model, const Dataset& ds);

// Checkpoint format: magic "MODL", u32 version=1, u32 d, m, K, then
// W1, b1, W2, b2 as little-endian 64-bit reals. Round-trip is bit-exact.
void save_checkpoint(const MlpModel& model, const std::string& path);
MlpModel load_checkpoint(const std::string& path);

}  // namespace sampsd
