#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sampsd/data.hpp"
#include "sampsd/model.hpp"

namespace sampsd {

enum class OptimizerKind { sgd, sam };

struct TrainConfig {
    std::size_t epochs = 40;
    std::size_t batch_size = 64;
    double learning_rate = 0.05;
    OptimizerKind kind = OptimizerKind::sgd;
    double rho = 0.1;  // SAM perturbation budget
    std::uint64_t seed = 0;

    void validate() const;
};

struct EpochStats {
    std::size_t epoch = 0;
    double loss = 0.0;
    std::optional<double> clean_accuracy;
    std::optional<double> attack_success_rate;
};

struct TrainLog {
    std::vector<EpochStats> epochs;
    std::string to_csv() const;  // epoch, loss, clean_acc, asr
};

// Clean-accuracy / ASR evaluation context, applied once per epoch. ASR is the
// fraction of triggered eval samples classified as their target label; under
// the fixed rule only samples whose origin label differs from the target
// count.
struct EvalContext {
    const Dataset* eval_set = nullptr;
    TriggerSpec trigger;
    TargetRule rule = TargetRule::fixed;
    int target_label = 0;
};

struct EvalStats {
    double clean_accuracy = 0.0;
    double attack_success_rate = 0.0;
};

EvalStats evaluate_model(const MlpModel& model, const EvalContext& ctx);

// theta <- theta - eta * g.
void sgd_step(MlpModel& model, const Gradients& grads, double eta);

// Two-pass SAM update on one batch: perturb by rho * g / ||g||_2 (norm over
// the full flattened parameter vector), take the gradient there, step the
// unperturbed parameters. Falls back to plain SGD when ||g||_2 < 1e-12.
// Returns the first-pass batch mean loss.
double sam_step(MlpModel& model, const Matrix& inputs, const std::vector<int>& labels, double eta,
                double rho);

struct TrainResult {
    MlpModel model;
    TrainLog log;
};

// Seeded mini-batch training. Deterministic given (dataset, init, cfg).
// Throws training_diverged_error naming the epoch if the loss goes
// non-finite.
TrainResult train(const Dataset& train_set, const MlpModel& init, const TrainConfig& cfg,
                  const EvalContext* eval = nullptr);

// One neuron's entry in the proposition report: whether the sufficient
// condition held and how the pre-activation moved under one SAM step versus
// one SGD step on the single poisoned sample.
struct NeuronReport {
    double preactivation = 0.0;
    double a = 0.0;
    bool active = false;       // relu'(pre) = 1
    bool applicable = false;   // gradient norm was nonzero
    bool condition = false;    // a_j * relu'(pre) < -relu(pre) / ((1 - l') ||grad f||^2)
    double delta_sam = 0.0;    // <w_j_sam, x~> - <w_j, x~>
    double delta_sgd = 0.0;
    bool sam_greater = false;  // delta_sam > delta_sgd
};

struct PropositionReport {
    std::vector<NeuronReport> neurons;
    std::size_t active_condition_true = 0;
    std::size_t sam_greater_among_true = 0;
    std::size_t negative_a_among_true = 0;
};

// Numeric check of the pre-activation claim on the bias-free two-layer binary
// network f(theta) = a . relu(W x), binary cross-entropy with sigmoid output,
// target label 0 for the poisoned sample.
PropositionReport proposition_check(const std::vector<double>& a, const Matrix& w,
                                    const std::vector<double>& x_tilde, double rho, double eta);

}  // namespace sampsd
