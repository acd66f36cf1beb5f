#include "sampsd/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "sampsd/errors.hpp"

namespace sampsd {

namespace {

template <typename T>
T get_or(const nlohmann::json& j, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw config_error("config: field '" + key + "' has the wrong type");
    }
}

template <typename Fn>
auto run_stage(const std::string& name, Fn&& fn) {
    try {
        return fn();
    } catch (const config_error& e) {
        throw config_error("[stage " + name + "] " + e.what());
    } catch (const std::exception& e) {
        throw std::runtime_error("[stage " + name + "] " + e.what());
    }
}

std::string fmt_opt(const std::optional<double>& v) {
    if (!v) return "na";
    std::ostringstream s;
    s << std::setprecision(10) << *v;
    return s.str();
}

nlohmann::json opt_json(const std::optional<double>& v) {
    if (!v) return nullptr;
    return *v;
}

}  // namespace

TriggerSpec AttackConfig::build_trigger(const ImageShape& shape) const {
    if (trigger_kind == TriggerKind::patch)
        return TriggerSpec::checkerboard_patch(shape, patch_size, corner);
    return TriggerSpec::noise_blend(shape, alpha);
}

AttackConfig attack_preset(const std::string& name) {
    AttackConfig a;
    a.name = name;
    if (name == "patch") {
        a.trigger_kind = TriggerKind::patch;
    } else if (name == "blend") {
        a.trigger_kind = TriggerKind::blend;
        a.alpha = 0.2;
    } else if (name == "blend_weak") {
        a.trigger_kind = TriggerKind::blend;
        a.alpha = 0.1;
    } else if (name == "patch_a2a") {
        a.trigger_kind = TriggerKind::patch;
        a.rule = TargetRule::all_to_all;
    } else {
        throw config_error("config: unknown attack preset '" + name + "'");
    }
    return a;
}

RunConfig default_run_config() {
    RunConfig cfg;
    cfg.train_sgd.kind = OptimizerKind::sgd;
    cfg.train_sam.kind = OptimizerKind::sam;
    return cfg;
}

RunConfig parse_run_config(const nlohmann::json& j) {
    if (!j.is_object()) throw config_error("config: top level must be a JSON object");
    RunConfig cfg = default_run_config();
    cfg.schema_version = get_or(j, "schema_version", 1);
    if (cfg.schema_version != 1) throw config_error("config: unsupported schema_version");
    cfg.seed = get_or<std::uint64_t>(j, "seed", 1);

    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        const std::string kind = get_or<std::string>(d, "kind", "synthetic");
        if (kind == "synthetic")
            cfg.dataset.kind = DatasetConfig::Kind::synthetic;
        else if (kind == "idx")
            cfg.dataset.kind = DatasetConfig::Kind::idx;
        else
            throw config_error("config: dataset.kind must be 'synthetic' or 'idx'");
        cfg.dataset.num_classes = get_or(d, "num_classes", 10);
        cfg.dataset.per_class_train = get_or<std::size_t>(d, "per_class_train", 500);
        cfg.dataset.per_class_test = get_or<std::size_t>(d, "per_class_test", 100);
        cfg.dataset.shape.height = get_or<std::size_t>(d, "height", 16);
        cfg.dataset.shape.width = get_or<std::size_t>(d, "width", 16);
        cfg.dataset.shape.channels = get_or<std::size_t>(d, "channels", 3);
        cfg.dataset.noise_sigma = get_or(d, "noise_sigma", 0.1);
        cfg.dataset.reference_per_class = get_or<std::size_t>(d, "reference_per_class", 50);
        cfg.dataset.train_images = get_or<std::string>(d, "train_images", "");
        cfg.dataset.train_labels = get_or<std::string>(d, "train_labels", "");
        cfg.dataset.test_images = get_or<std::string>(d, "test_images", "");
        cfg.dataset.test_labels = get_or<std::string>(d, "test_labels", "");
        if (cfg.dataset.kind == DatasetConfig::Kind::idx &&
            (cfg.dataset.train_images.empty() || cfg.dataset.train_labels.empty() ||
             cfg.dataset.test_images.empty() || cfg.dataset.test_labels.empty()))
            throw config_error("config: dataset.kind 'idx' requires train/test image and label paths");
    }

    if (j.contains("attack")) {
        const auto& a = j.at("attack");
        const std::string name = get_or<std::string>(a, "name", "patch");
        if (name == "custom") {
            cfg.attack.name = name;
            const std::string trig = get_or<std::string>(a, "trigger_kind", "patch");
            if (trig == "patch")
                cfg.attack.trigger_kind = TriggerKind::patch;
            else if (trig == "blend")
                cfg.attack.trigger_kind = TriggerKind::blend;
            else
                throw config_error("config: attack.trigger_kind must be 'patch' or 'blend'");
        } else {
            cfg.attack = attack_preset(name);
        }
        cfg.attack.patch_size = get_or<std::size_t>(a, "patch_size", cfg.attack.patch_size);
        cfg.attack.alpha = get_or(a, "alpha", cfg.attack.alpha);
        cfg.attack.poisoning_ratio = get_or(a, "poisoning_ratio", cfg.attack.poisoning_ratio);
        cfg.attack.target_label = get_or(a, "target_label", cfg.attack.target_label);
        if (a.contains("target_rule")) {
            const std::string rule = a.at("target_rule").get<std::string>();
            if (rule == "fixed")
                cfg.attack.rule = TargetRule::fixed;
            else if (rule == "all_to_all")
                cfg.attack.rule = TargetRule::all_to_all;
            else
                throw config_error("config: attack.target_rule must be 'fixed' or 'all_to_all'");
        }
    }

    if (j.contains("train")) {
        const auto& t = j.at("train");
        cfg.hidden_dim = get_or<std::size_t>(t, "hidden_dim", 128);
        auto fill = [&](TrainConfig& tc, const char* key) {
            nlohmann::json section = t.contains(key) ? t.at(key) : nlohmann::json::object();
            tc.epochs = get_or<std::size_t>(section, "epochs", get_or<std::size_t>(t, "epochs", 40));
            tc.batch_size =
                get_or<std::size_t>(section, "batch_size", get_or<std::size_t>(t, "batch_size", 64));
            tc.learning_rate =
                get_or(section, "learning_rate", get_or(t, "learning_rate", 0.05));
            tc.rho = get_or(section, "rho", get_or(t, "rho", 0.1));
        };
        fill(cfg.train_sgd, "sgd");
        fill(cfg.train_sam, "sam");
    }
    cfg.train_sgd.kind = OptimizerKind::sgd;
    cfg.train_sam.kind = OptimizerKind::sam;

    if (j.contains("scaler")) {
        const auto& s = j.at("scaler");
        cfg.scaler.enabled = get_or(s, "enabled", true);
        cfg.scaler.params.variance_target = get_or(s, "variance_target", 0.999);
        cfg.scaler.params.max_dim = get_or<std::size_t>(s, "max_dim", 64);
        cfg.scaler.params.eigen_floor = get_or(s, "eigen_floor", 1e-2);
        cfg.scaler.params.confidence_threshold = get_or(s, "confidence_threshold", 0.95);
        cfg.scaler.params.cap_per_class = get_or<std::size_t>(s, "cap_per_class", 100);
        cfg.scaler.refine = get_or(s, "refine", false);
    }

    if (j.contains("detectors")) {
        cfg.detectors.clear();
        for (const auto& d : j.at("detectors")) {
            const std::string name = d.get<std::string>();
            if (name != "ac" && name != "ss" && name != "spectre_lite" && name != "gram")
                throw config_error("config: unknown detector '" + name + "'");
            cfg.detectors.push_back(name);
        }
        if (cfg.detectors.empty()) throw config_error("config: detectors list is empty");
    }

    if (j.contains("detector_params")) {
        const auto& p = j.at("detector_params");
        if (p.contains("expected_fraction") && !p.at("expected_fraction").is_null())
            cfg.detector_params.expected_fraction = p.at("expected_fraction").get<double>();
        cfg.detector_params.subspace_k = get_or<std::size_t>(p, "subspace_k", 8);
        cfg.detector_params.gram_target_fpr = get_or(p, "target_fpr", 0.05);
    }

    cfg.ablation_grid = get_or(j, "ablation_grid", false);
    cfg.output_dir = get_or<std::string>(j, "output_dir", "out");

    if (j.contains("sweep")) {
        const auto& s = j.at("sweep");
        cfg.sweep_axis = get_or<std::string>(s, "axis", "p");
        cfg.sweep_values = get_or(s, "values", std::vector<double>{});
        cfg.sweep_seeds = get_or(s, "seeds", std::vector<std::uint64_t>{});
    }
    if (j.contains("correlate")) {
        const auto& c = j.at("correlate");
        cfg.correlate_attacks = get_or(c, "attacks", std::vector<std::string>{});
        cfg.correlate_ratios = get_or(c, "ratios", std::vector<double>{});
    }
    return cfg;
}

nlohmann::json run_config_to_json(const RunConfig& cfg) {
    nlohmann::json j;
    j["schema_version"] = cfg.schema_version;
    j["seed"] = cfg.seed;
    j["dataset"] = {
        {"kind", cfg.dataset.kind == DatasetConfig::Kind::synthetic ? "synthetic" : "idx"},
        {"num_classes", cfg.dataset.num_classes},
        {"per_class_train", cfg.dataset.per_class_train},
        {"per_class_test", cfg.dataset.per_class_test},
        {"height", cfg.dataset.shape.height},
        {"width", cfg.dataset.shape.width},
        {"channels", cfg.dataset.shape.channels},
        {"noise_sigma", cfg.dataset.noise_sigma},
        {"reference_per_class", cfg.dataset.reference_per_class},
    };
    j["attack"] = {
        {"name", cfg.attack.name},
        {"trigger_kind", cfg.attack.trigger_kind == TriggerKind::patch ? "patch" : "blend"},
        {"patch_size", cfg.attack.patch_size},
        {"alpha", cfg.attack.alpha},
        {"target_rule", cfg.attack.rule == TargetRule::fixed ? "fixed" : "all_to_all"},
        {"target_label", cfg.attack.target_label},
        {"poisoning_ratio", cfg.attack.poisoning_ratio},
    };
    auto train_json = [](const TrainConfig& t) {
        return nlohmann::json{{"epochs", t.epochs},
                              {"batch_size", t.batch_size},
                              {"learning_rate", t.learning_rate},
                              {"rho", t.rho}};
    };
    j["train"] = {{"hidden_dim", cfg.hidden_dim},
                  {"sgd", train_json(cfg.train_sgd)},
                  {"sam", train_json(cfg.train_sam)}};
    j["scaler"] = {{"enabled", cfg.scaler.enabled},
                   {"variance_target", cfg.scaler.params.variance_target},
                   {"max_dim", cfg.scaler.params.max_dim},
                   {"eigen_floor", cfg.scaler.params.eigen_floor},
                   {"confidence_threshold", cfg.scaler.params.confidence_threshold},
                   {"cap_per_class", cfg.scaler.params.cap_per_class},
                   {"refine", cfg.scaler.refine}};
    j["detectors"] = cfg.detectors;
    j["detector_params"] = {{"expected_fraction", cfg.detector_params.expected_fraction < 0.0
                                                      ? nlohmann::json(nullptr)
                                                      : nlohmann::json(cfg.detector_params.expected_fraction)},
                            {"subspace_k", cfg.detector_params.subspace_k},
                            {"target_fpr", cfg.detector_params.gram_target_fpr}};
    j["ablation_grid"] = cfg.ablation_grid;
    j["output_dir"] = cfg.output_dir;
    return j;
}

namespace {

struct PreparedData {
    Dataset train;      // poisoned training set
    Dataset reference;  // defender's clean reference
    Dataset eval;       // held-out test remainder
    TriggerSpec trigger;
};

PreparedData prepare_data(const RunConfig& cfg, Rng& master) {
    PreparedData out;
    Dataset train_clean, test;
    if (cfg.dataset.kind == DatasetConfig::Kind::synthetic) {
        train_clean = gen_synthetic(cfg.dataset.num_classes, cfg.dataset.per_class_train,
                                    cfg.dataset.shape, cfg.dataset.noise_sigma,
                                    master.stream("dataset_train").next_u64(), "train");
        test = gen_synthetic(cfg.dataset.num_classes, cfg.dataset.per_class_test,
                             cfg.dataset.shape, cfg.dataset.noise_sigma,
                             master.stream("dataset_test").next_u64(), "test");
    } else {
        train_clean = load_idx(cfg.dataset.train_images, cfg.dataset.train_labels);
        train_clean.split = "train";
        test = load_idx(cfg.dataset.test_images, cfg.dataset.test_labels);
        test.split = "test";
    }

    out.trigger = cfg.attack.build_trigger(train_clean.shape);

    PoisonPlan plan;
    plan.poisoning_ratio = cfg.attack.poisoning_ratio;
    plan.rule = cfg.attack.rule;
    plan.target_label = cfg.attack.target_label;
    plan.trigger = out.trigger;
    plan.seed = master.stream("poison").next_u64();
    out.train = poison_dataset(train_clean, plan);

    auto [reference, eval] =
        split_per_class(test, cfg.dataset.reference_per_class, master.stream("reference_split").next_u64());
    out.reference = std::move(reference);
    out.eval = std::move(eval);
    return out;
}

std::vector<std::string> variant_list(const RunConfig& cfg) {
    if (cfg.ablation_grid) return {"sgd_raw", "sgd_scaled", "sam_raw", "sam_scaled"};
    if (cfg.scaler.enabled) return {"sgd_raw", "sam_scaled"};
    return {"sgd_raw", "sam_raw"};
}

DetectionResult run_detector(const std::string& name, const Matrix& features,
                             const std::vector<int>& labels, int num_classes,
                             const Matrix& ref_features, const std::vector<int>& ref_labels,
                             double expected_fraction, const DetectorParams& params, Rng rng) {
    if (name == "ac") return detect_ac(features, labels, num_classes, rng);
    if (name == "ss") return detect_ss(features, labels, num_classes, expected_fraction, rng);
    if (name == "spectre_lite")
        return detect_spectre_lite(features, labels, num_classes, expected_fraction,
                                   params.subspace_k, rng);
    if (name == "gram")
        return detect_gram(features, labels, num_classes, ref_features, ref_labels,
                           params.gram_target_fpr);
    throw config_error("unknown detector '" + name + "'");
}

}  // namespace

PipelineReport run_pipeline(const RunConfig& cfg) {
    PipelineReport report;
    report.config = cfg;
    Rng master(cfg.seed);

    PreparedData data = run_stage("data", [&] { return prepare_data(cfg, master); });
    report.train_size = data.train.size();
    report.poison_count = data.train.poison_count();
    report.labels.reserve(data.train.size());
    report.poison_truth.reserve(data.train.size());
    for (const auto& s : data.train.samples) {
        report.labels.push_back(s.label);
        report.poison_truth.push_back(s.is_poisoned);
    }

    const std::size_t input_dim = data.train.shape.pixel_count();
    const MlpModel init = init_mlp(input_dim, cfg.hidden_dim,
                                   static_cast<std::size_t>(data.train.num_classes),
                                   master.stream("init"));

    EvalContext eval_ctx;
    eval_ctx.eval_set = &data.eval;
    eval_ctx.trigger = data.trigger;
    eval_ctx.rule = cfg.attack.rule;
    eval_ctx.target_label = cfg.attack.target_label;

    TrainConfig sgd_cfg = cfg.train_sgd;
    sgd_cfg.seed = master.stream("train_sgd").next_u64();
    TrainConfig sam_cfg = cfg.train_sam;
    sam_cfg.seed = master.stream("train_sam").next_u64();

    TrainResult sgd = run_stage("train_sgd", [&] { return train(data.train, init, sgd_cfg, &eval_ctx); });
    TrainResult sam = run_stage("train_sam", [&] { return train(data.train, init, sam_cfg, &eval_ctx); });
    report.log_sgd = sgd.log;
    report.log_sam = sam.log;
    report.model_sgd = sgd.model;
    report.model_sam = sam.model;

    run_stage("analysis_tac", [&] {
        report.tac_sgd = tac(sgd.model, data.reference, data.trigger);
        report.tac_sam = tac(sam.model, data.reference, data.trigger);
        report.top2_tac_sgd = topk_tac(report.tac_sgd, 2);
        report.top2_tac_sam = topk_tac(report.tac_sam, 2);
        report.weight_norms_sgd = weight_norms(sgd.model);
        report.weight_norms_sam = weight_norms(sam.model);
        return 0;
    });

    // Feature variants.
    report.variants = variant_list(cfg);
    const bool need_scaled =
        std::any_of(report.variants.begin(), report.variants.end(),
                    [](const std::string& v) { return v.ends_with("_scaled"); });

    Matrix feats_train_sgd = run_stage("features", [&] { return extract_features(sgd.model, data.train); });
    Matrix feats_train_sam = extract_features(sam.model, data.train);
    Matrix feats_ref_sgd = extract_features(sgd.model, data.reference);
    Matrix feats_ref_sam = extract_features(sam.model, data.reference);

    const double p = cfg.attack.poisoning_ratio;
    report.evaluation_mode = cfg.detector_params.expected_fraction < 0.0;
    double eps = cfg.detector_params.expected_fraction;
    if (eps < 0.0) eps = (p > 0.0 && p < 0.5) ? p : 0.05;
    report.expected_fraction_used = eps;

    auto prepare_scaled = [&](const MlpModel& model, const Matrix& feats_train,
                              const Matrix& feats_ref, const std::string& which) {
        std::vector<std::size_t> collected = collect_potential_clean(
            model, data.train, cfg.scaler.params.cap_per_class,
            cfg.scaler.params.confidence_threshold);

        auto build_pool = [&](const std::vector<std::size_t>& idx) {
            Matrix pool(feats_ref.rows + idx.size(), feats_ref.cols);
            std::copy(feats_ref.data.begin(), feats_ref.data.end(), pool.data.begin());
            for (std::size_t i = 0; i < idx.size(); ++i)
                std::copy(feats_train.row_ptr(idx[i]), feats_train.row_ptr(idx[i]) + feats_train.cols,
                          pool.row_ptr(feats_ref.rows + i));
            return pool;
        };

        ScalerState state = fit_scaler(feats_train, build_pool(collected),
                                       cfg.scaler.params.variance_target, cfg.scaler.params.max_dim,
                                       cfg.scaler.params.eigen_floor);

        if (cfg.scaler.refine) {
            // Preliminary detection round on the scaled features; drop
            // anything flagged from the collected pool and refit.
            const Matrix scaled = scale_rows(state, feats_train);
            const Matrix scaled_ref = scale_rows(state, feats_ref);
            std::vector<int> ref_labels;
            for (const auto& s : data.reference.samples) ref_labels.push_back(s.label);
            std::vector<bool> flagged(data.train.size(), false);
            for (const auto& det : cfg.detectors) {
                const DetectionResult r = run_detector(
                    det, scaled, report.labels, data.train.num_classes, scaled_ref, ref_labels,
                    eps, cfg.detector_params, master.stream("refine/" + which + "/" + det));
                for (std::size_t i = 0; i < flagged.size(); ++i)
                    flagged[i] = flagged[i] || r.flags[i];
            }
            std::vector<std::size_t> kept;
            for (std::size_t i : collected)
                if (!flagged[i]) kept.push_back(i);
            if (kept.size() >= 2)
                state = fit_scaler(feats_train, build_pool(kept), cfg.scaler.params.variance_target,
                                   cfg.scaler.params.max_dim, cfg.scaler.params.eigen_floor);
        }
        return state;
    };

    if (need_scaled) {
        run_stage("scaler", [&] {
            report.scaler_sgd = prepare_scaled(sgd.model, feats_train_sgd, feats_ref_sgd, "sgd");
            report.scaler_sam = prepare_scaled(sam.model, feats_train_sam, feats_ref_sam, "sam");
            report.scaler_fitted = true;
            return 0;
        });
    }

    for (const auto& variant : report.variants) {
        const bool is_sam = variant.starts_with("sam");
        const bool is_scaled = variant.ends_with("_scaled");
        const Matrix& base_train = is_sam ? feats_train_sam : feats_train_sgd;
        const Matrix& base_ref = is_sam ? feats_ref_sam : feats_ref_sgd;
        if (is_scaled) {
            const ScalerState& state = is_sam ? report.scaler_sam : report.scaler_sgd;
            report.train_features[variant] = scale_rows(state, base_train);
            report.reference_features[variant] = scale_rows(state, base_ref);
        } else {
            report.train_features[variant] = base_train;
            report.reference_features[variant] = base_ref;
        }
    }

    std::vector<int> ref_labels;
    for (const auto& s : data.reference.samples) ref_labels.push_back(s.label);

    run_stage("detect", [&] {
        for (const auto& variant : report.variants) {
            const Matrix& feats = report.train_features.at(variant);
            const Matrix& ref = report.reference_features.at(variant);
            for (const auto& det : cfg.detectors) {
                DetectionOutcome outcome;
                outcome.detector = det;
                outcome.variant = variant;
                outcome.detection =
                    run_detector(det, feats, report.labels, data.train.num_classes, ref,
                                 ref_labels, eps, cfg.detector_params,
                                 master.stream("detector/" + det + "/" + variant));
                outcome.metrics = confusion(outcome.detection.flags, report.poison_truth);
                try {
                    outcome.metrics.auc = auc(outcome.detection.scores, report.poison_truth);
                } catch (const undefined_metric_error&) {
                    outcome.metrics.auc = std::nullopt;
                }
                report.outcomes.push_back(std::move(outcome));
            }
        }
        return 0;
    });

    run_stage("analysis_features", [&] {
        for (const auto& variant : report.variants) {
            const Matrix& feats = report.train_features.at(variant);
            VariantAnalysis va;
            va.variant = variant;
            const std::vector<double> icv =
                intra_class_variance(feats, report.labels, data.train.num_classes);
            va.mean_intra_class_variance =
                std::accumulate(icv.begin(), icv.end(), 0.0) / icv.size();

            if (report.poison_count > 0 && cfg.attack.rule == TargetRule::fixed) {
                // Silhouette of clean target-class vs poisoned samples.
                std::vector<std::size_t> subset;
                std::vector<bool> is_poison_group;
                for (std::size_t i = 0; i < report.labels.size(); ++i) {
                    if (report.poison_truth[i]) {
                        subset.push_back(i);
                        is_poison_group.push_back(true);
                    } else if (report.labels[i] == cfg.attack.target_label) {
                        subset.push_back(i);
                        is_poison_group.push_back(false);
                    }
                }
                if (subset.size() >= 3) {
                    Matrix sub(subset.size(), feats.cols);
                    for (std::size_t i = 0; i < subset.size(); ++i)
                        std::copy(feats.row_ptr(subset[i]), feats.row_ptr(subset[i]) + feats.cols,
                                  sub.row_ptr(i));
                    va.silhouette = silhouette(sub, is_poison_group);
                }

                std::vector<bool> clean_flags(report.poison_truth.size());
                for (std::size_t i = 0; i < clean_flags.size(); ++i)
                    clean_flags[i] = !report.poison_truth[i];
                const CenterDistances cd =
                    center_distances(feats, report.labels, cfg.attack.target_label, clean_flags);
                if (!cd.clean.empty())
                    va.mean_center_distance_clean =
                        std::accumulate(cd.clean.begin(), cd.clean.end(), 0.0) / cd.clean.size();
                if (!cd.poisoned.empty())
                    va.mean_center_distance_poisoned =
                        std::accumulate(cd.poisoned.begin(), cd.poisoned.end(), 0.0) /
                        cd.poisoned.size();
            }
            report.analysis.push_back(va);
        }
        return 0;
    });

    return report;
}

CorrelationCell run_correlation_cell(const RunConfig& cfg) {
    CorrelationCell cell;
    cell.attack = cfg.attack.name;
    cell.poisoning_ratio = cfg.attack.poisoning_ratio;

    Rng master(cfg.seed);
    PreparedData data = run_stage("data", [&] { return prepare_data(cfg, master); });

    const std::size_t input_dim = data.train.shape.pixel_count();
    const MlpModel init = init_mlp(input_dim, cfg.hidden_dim,
                                   static_cast<std::size_t>(data.train.num_classes),
                                   master.stream("init"));
    TrainConfig sgd_cfg = cfg.train_sgd;
    sgd_cfg.seed = master.stream("train_sgd").next_u64();
    const TrainResult sgd = run_stage("train_sgd", [&] { return train(data.train, init, sgd_cfg); });

    cell.top2_tac = topk_tac(tac(sgd.model, data.reference, data.trigger), 2);

    const Matrix feats = extract_features(sgd.model, data.train);
    const Matrix ref = extract_features(sgd.model, data.reference);
    std::vector<int> labels, ref_labels;
    std::vector<bool> truth;
    for (const auto& s : data.train.samples) {
        labels.push_back(s.label);
        truth.push_back(s.is_poisoned);
    }
    for (const auto& s : data.reference.samples) ref_labels.push_back(s.label);

    const double p = cfg.attack.poisoning_ratio;
    double eps = cfg.detector_params.expected_fraction;
    if (eps < 0.0) eps = (p > 0.0 && p < 0.5) ? p : 0.05;

    for (const auto& det : cfg.detectors) {
        const DetectionResult r =
            run_detector(det, feats, labels, data.train.num_classes, ref, ref_labels, eps,
                         cfg.detector_params, master.stream("detector/" + det + "/sgd_raw"));
        try {
            cell.detector_auc[det] = auc(r.scores, truth);
        } catch (const undefined_metric_error&) {
            cell.detector_auc[det] = std::nullopt;
        }
    }
    return cell;
}

nlohmann::json PipelineReport::to_json() const {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["config"] = run_config_to_json(config);
    j["dataset"] = {{"train_size", train_size},
                    {"poison_count", poison_count},
                    {"poison_ratio_requested", config.attack.poisoning_ratio}};
    j["detector_mode"] = {{"evaluation_mode", evaluation_mode},
                          {"expected_fraction_used", expected_fraction_used}};

    auto log_json = [](const TrainLog& log) {
        nlohmann::json rows = nlohmann::json::array();
        for (const auto& e : log.epochs)
            rows.push_back({{"epoch", e.epoch},
                            {"loss", e.loss},
                            {"clean_acc", opt_json(e.clean_accuracy)},
                            {"asr", opt_json(e.attack_success_rate)}});
        return rows;
    };
    j["train"] = {{"sgd", log_json(log_sgd)}, {"sam", log_json(log_sam)}};
    if (!log_sgd.epochs.empty() && !log_sam.epochs.empty()) {
        j["train"]["final"] = {
            {"sgd_clean_acc", opt_json(log_sgd.epochs.back().clean_accuracy)},
            {"sgd_asr", opt_json(log_sgd.epochs.back().attack_success_rate)},
            {"sam_clean_acc", opt_json(log_sam.epochs.back().clean_accuracy)},
            {"sam_asr", opt_json(log_sam.epochs.back().attack_success_rate)},
        };
    }

    j["tac"] = {{"top2_sgd", top2_tac_sgd},
                {"top2_sam", top2_tac_sam},
                {"clean_set_size", tac_sgd.clean_set_size}};

    nlohmann::json analysis_json = nlohmann::json::array();
    for (const auto& va : analysis)
        analysis_json.push_back({{"variant", va.variant},
                                 {"mean_intra_class_variance", va.mean_intra_class_variance},
                                 {"silhouette", opt_json(va.silhouette)},
                                 {"mean_center_distance_clean", opt_json(va.mean_center_distance_clean)},
                                 {"mean_center_distance_poisoned",
                                  opt_json(va.mean_center_distance_poisoned)}});
    j["analysis"] = analysis_json;

    nlohmann::json detections = nlohmann::json::array();
    for (const auto& o : outcomes) {
        nlohmann::json diag = nlohmann::json::array();
        for (const auto& d : o.detection.diagnostics)
            diag.push_back({{"class", d.cls},
                            {"cluster_small", d.cluster_small},
                            {"cluster_large", d.cluster_large},
                            {"threshold", d.threshold},
                            {"flag_count", d.flag_count},
                            {"note", d.note}});
        detections.push_back({{"detector", o.detector},
                              {"variant", o.variant},
                              {"tpr", opt_json(o.metrics.tpr)},
                              {"fpr", opt_json(o.metrics.fpr)},
                              {"f1", opt_json(o.metrics.f1)},
                              {"auc", opt_json(o.metrics.auc)},
                              {"counts",
                               {{"tp", o.metrics.tp},
                                {"fp", o.metrics.fp},
                                {"tn", o.metrics.tn},
                                {"fn", o.metrics.fn}}},
                              {"diagnostics", diag}});
    }
    j["detections"] = detections;
    return j;
}

std::string PipelineReport::metrics_csv() const {
    std::ostringstream out;
    out << "attack,detector,variant,tpr,fpr,f1,auc,seed\n";
    for (const auto& o : outcomes) {
        out << config.attack.name << "," << o.detector << "," << o.variant << ","
            << fmt_opt(o.metrics.tpr) << "," << fmt_opt(o.metrics.fpr) << ","
            << fmt_opt(o.metrics.f1) << "," << fmt_opt(o.metrics.auc) << "," << config.seed
            << "\n";
    }
    return out.str();
}

std::string PipelineReport::detections_csv() const {
    std::ostringstream out;
    out << "sample_index,class,score,flag,detector,variant\n";
    out << std::setprecision(10);
    for (const auto& o : outcomes) {
        for (std::size_t i = 0; i < o.detection.scores.size(); ++i) {
            out << i << "," << labels[i] << "," << o.detection.scores[i] << ","
                << (o.detection.flags[i] ? 1 : 0) << "," << o.detector << "," << o.variant
                << "\n";
        }
    }
    return out.str();
}

}  // namespace sampsd
