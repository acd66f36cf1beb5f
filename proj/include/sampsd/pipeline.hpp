#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sampsd/analysis.hpp"
#include "sampsd/data.hpp"
#include "sampsd/detectors.hpp"
#include "sampsd/metrics.hpp"
#include "sampsd/model.hpp"
#include "sampsd/optim.hpp"
#include "sampsd/scaling.hpp"

namespace sampsd {

struct DatasetConfig {
    enum class Kind { synthetic, idx };
    Kind kind = Kind::synthetic;
    int num_classes = 10;
    std::size_t per_class_train = 500;
    std::size_t per_class_test = 100;
    ImageShape shape{16, 16, 3};
    double noise_sigma = 0.1;
    std::size_t reference_per_class = 50;
    // idx mode
    std::string train_images, train_labels, test_images, test_labels;
};

struct AttackConfig {
    std::string name = "patch";  // patch | blend | blend_weak | patch_a2a
    TriggerKind trigger_kind = TriggerKind::patch;
    std::size_t patch_size = 3;
    Corner corner = Corner::bottom_right;
    double alpha = 0.2;
    TargetRule rule = TargetRule::fixed;
    int target_label = 0;
    double poisoning_ratio = 0.05;

    TriggerSpec build_trigger(const ImageShape& shape) const;
};

// Named presets mirroring the default attack grid.
AttackConfig attack_preset(const std::string& name);

struct ScalerSection {
    bool enabled = true;
    ScalerConfig params;
    bool refine = false;  // second collection pass after a preliminary detection round
};

struct DetectorParams {
    // Negative means "derive": the true poisoning ratio when it is usable
    // (evaluation mode), otherwise 0.05 (deployment mode).
    double expected_fraction = -1.0;
    std::size_t subspace_k = 8;
    double gram_target_fpr = 0.05;
};

struct RunConfig {
    int schema_version = 1;
    std::uint64_t seed = 1;
    DatasetConfig dataset;
    AttackConfig attack;
    std::size_t hidden_dim = 128;
    TrainConfig train_sgd;
    TrainConfig train_sam;
    ScalerSection scaler;
    std::vector<std::string> detectors{"ac", "ss", "spectre_lite", "gram"};
    DetectorParams detector_params;
    bool ablation_grid = false;
    std::string output_dir = "out";

    // sweep / correlate sections (used only by those commands)
    std::string sweep_axis = "p";
    std::vector<double> sweep_values;
    std::vector<std::uint64_t> sweep_seeds;
    std::vector<std::string> correlate_attacks;
    std::vector<double> correlate_ratios;
};

RunConfig default_run_config();
RunConfig parse_run_config(const nlohmann::json& j);
nlohmann::json run_config_to_json(const RunConfig& cfg);

// One detector x feature-variant outcome.
struct DetectionOutcome {
    std::string detector;
    std::string variant;  // sgd_raw, sgd_scaled, sam_raw, sam_scaled
    MetricReport metrics;
    DetectionResult detection;
};

struct VariantAnalysis {
    std::string variant;
    double mean_intra_class_variance = 0.0;
    std::optional<double> silhouette;  // clean target class vs poisoned (fixed rule, p > 0)
    std::optional<double> mean_center_distance_clean;
    std::optional<double> mean_center_distance_poisoned;
};

struct PipelineReport {
    RunConfig config;
    std::size_t train_size = 0;
    std::size_t poison_count = 0;
    double expected_fraction_used = 0.0;
    bool evaluation_mode = true;

    TrainLog log_sgd, log_sam;
    TacProfile tac_sgd, tac_sam;
    double top2_tac_sgd = 0.0, top2_tac_sam = 0.0;
    std::vector<double> weight_norms_sgd, weight_norms_sam;

    std::vector<std::string> variants;
    std::map<std::string, Matrix> train_features;  // per variant
    std::map<std::string, Matrix> reference_features;
    std::vector<VariantAnalysis> analysis;
    std::vector<DetectionOutcome> outcomes;

    std::vector<int> labels;          // training-set labels, post shuffle
    std::vector<bool> poison_truth;   // ground-truth flags, same order
    MlpModel model_sgd, model_sam;
    ScalerState scaler_sgd, scaler_sam;
    bool scaler_fitted = false;

    nlohmann::json to_json() const;
    std::string metrics_csv() const;     // attack,detector,variant,tpr,fpr,f1,auc,seed
    std::string detections_csv() const;  // sample_index,class,score,flag,detector,variant
};

// Stages 1-3 end to end: poison, train the SGD/SAM pair, extract features,
// fit and apply the scaler, run the selected detectors on every requested
// variant, and score everything against ground truth.
PipelineReport run_pipeline(const RunConfig& cfg);

// The SGD-only slice used by the correlation study: Top-2 TAC plus
// per-detector AUC on raw features.
struct CorrelationCell {
    std::string attack;
    double poisoning_ratio = 0.0;
    double top2_tac = 0.0;
    std::map<std::string, std::optional<double>> detector_auc;
};
CorrelationCell run_correlation_cell(const RunConfig& cfg);

}  // namespace sampsd
