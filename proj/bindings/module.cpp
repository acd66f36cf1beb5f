#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "sampsd/analysis.hpp"
#include "sampsd/commands.hpp"
#include "sampsd/data.hpp"
#include "sampsd/detectors.hpp"
#include "sampsd/errors.hpp"
#include "sampsd/metrics.hpp"
#include "sampsd/model.hpp"
#include "sampsd/optim.hpp"
#include "sampsd/pipeline.hpp"
#include "sampsd/scaling.hpp"

namespace py = pybind11;
using namespace pybind11::literals;
using namespace sampsd;

namespace {

Matrix np_to_matrix(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
    if (arr.ndim() != 2) throw dimension_error("expected a 2-D array");
    Matrix m(static_cast<std::size_t>(arr.shape(0)), static_cast<std::size_t>(arr.shape(1)));
    std::copy(arr.data(), arr.data() + m.data.size(), m.data.begin());
    return m;
}

py::array_t<double> matrix_to_np(const Matrix& m) {
    py::array_t<double> arr({m.rows, m.cols});
    std::copy(m.data.begin(), m.data.end(), arr.mutable_data());
    return arr;
}

std::vector<double> np_to_vec(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
    if (arr.ndim() != 1) throw dimension_error("expected a 1-D array");
    return std::vector<double>(arr.data(), arr.data() + arr.shape(0));
}

py::object json_to_py(const nlohmann::json& j) {
    return py::module_::import("json").attr("loads")(j.dump());
}

nlohmann::json py_to_json(const py::object& obj) {
    if (py::isinstance<py::str>(obj)) return nlohmann::json::parse(obj.cast<std::string>());
    const std::string dumped =
        py::module_::import("json").attr("dumps")(obj).cast<std::string>();
    return nlohmann::json::parse(dumped);
}

py::dict detection_to_dict(const DetectionResult& r) {
    py::dict out;
    out["detector"] = r.detector;
    py::array_t<double> scores(r.scores.size());
    std::copy(r.scores.begin(), r.scores.end(), scores.mutable_data());
    out["scores"] = scores;
    py::list flags;
    for (bool f : r.flags) flags.append(f);
    out["flags"] = flags;
    py::list diags;
    for (const auto& d : r.diagnostics) {
        diags.append(py::dict("cls"_a = d.cls, "cluster_small"_a = d.cluster_small,
                              "cluster_large"_a = d.cluster_large, "threshold"_a = d.threshold,
                              "flag_count"_a = d.flag_count, "note"_a = d.note));
    }
    out["diagnostics"] = diags;
    return out;
}

TrainConfig make_train_config(std::size_t epochs, std::size_t batch_size, double learning_rate,
                              const std::string& optimizer, double rho, std::uint64_t seed) {
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.batch_size = batch_size;
    cfg.learning_rate = learning_rate;
    if (optimizer == "sgd")
        cfg.kind = OptimizerKind::sgd;
    else if (optimizer == "sam")
        cfg.kind = OptimizerKind::sam;
    else
        throw config_error("optimizer must be 'sgd' or 'sam'");
    cfg.rho = rho;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "SAM-enhanced poisoned-sample detection: C++ core bindings";

    py::register_exception<value_error>(m, "ValueErrorSampsd", PyExc_ValueError);
    py::register_exception<dimension_error>(m, "DimensionError", PyExc_ValueError);
    py::register_exception<format_error>(m, "FormatError", PyExc_IOError);
    py::register_exception<config_error>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<undefined_metric_error>(m, "UndefinedMetricError", PyExc_ArithmeticError);
    py::register_exception<training_diverged_error>(m, "TrainingDivergedError", PyExc_RuntimeError);

    py::class_<ImageShape>(m, "ImageShape")
        .def(py::init([](std::size_t h, std::size_t w, std::size_t c) {
                 return ImageShape{h, w, c};
             }),
             "height"_a, "width"_a, "channels"_a)
        .def_readonly("height", &ImageShape::height)
        .def_readonly("width", &ImageShape::width)
        .def_readonly("channels", &ImageShape::channels);

    py::class_<Dataset>(m, "Dataset")
        .def_property_readonly("size", &Dataset::size)
        .def_readonly("num_classes", &Dataset::num_classes)
        .def_readonly("shape", &Dataset::shape)
        .def_readonly("split", &Dataset::split)
        .def_property_readonly("poison_count", &Dataset::poison_count)
        .def("labels",
             [](const Dataset& ds) {
                 std::vector<int> out;
                 for (const auto& s : ds.samples) out.push_back(s.label);
                 return out;
             })
        .def("poison_flags",
             [](const Dataset& ds) {
                 std::vector<bool> out;
                 for (const auto& s : ds.samples) out.push_back(s.is_poisoned);
                 return out;
             })
        .def("pixels", [](const Dataset& ds, std::size_t i) {
            if (i >= ds.size()) throw dimension_error("sample index out of range");
            py::array_t<double> arr(ds.samples[i].pixels.size());
            std::copy(ds.samples[i].pixels.begin(), ds.samples[i].pixels.end(),
                      arr.mutable_data());
            return arr;
        });

    py::class_<TriggerSpec>(m, "TriggerSpec")
        .def_static(
            "checkerboard_patch",
            [](const ImageShape& shape, std::size_t size) {
                return TriggerSpec::checkerboard_patch(shape, size);
            },
            "shape"_a, "size"_a = 3)
        .def_static("noise_blend", &TriggerSpec::noise_blend, "shape"_a, "alpha"_a,
                    "pattern_seed"_a = 7);

    m.def(
        "gen_synthetic",
        [](int num_classes, std::size_t per_class, std::size_t height, std::size_t width,
           std::size_t channels, double noise_sigma, std::uint64_t seed, const std::string& split) {
            return gen_synthetic(num_classes, per_class, ImageShape{height, width, channels},
                                 noise_sigma, seed, split);
        },
        "num_classes"_a, "per_class"_a, "height"_a = 16, "width"_a = 16, "channels"_a = 3,
        "noise_sigma"_a = 0.1, "seed"_a = 1, "split"_a = "train");

    m.def("load_idx", &load_idx, "image_path"_a, "label_path"_a);
    m.def("save_idx", &save_idx, "dataset"_a, "image_path"_a, "label_path"_a);

    m.def(
        "apply_trigger",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& pixels,
           const ImageShape& shape, const TriggerSpec& trigger) {
            const std::vector<double> out = apply_trigger(np_to_vec(pixels), shape, trigger);
            py::array_t<double> arr(out.size());
            std::copy(out.begin(), out.end(), arr.mutable_data());
            return arr;
        },
        "pixels"_a, "shape"_a, "trigger"_a);

    m.def(
        "poison_dataset",
        [](const Dataset& clean, double ratio, const std::string& rule, int target_label,
           const TriggerSpec& trigger, std::uint64_t seed) {
            PoisonPlan plan;
            plan.poisoning_ratio = ratio;
            if (rule == "fixed")
                plan.rule = TargetRule::fixed;
            else if (rule == "all_to_all")
                plan.rule = TargetRule::all_to_all;
            else
                throw config_error("rule must be 'fixed' or 'all_to_all'");
            plan.target_label = target_label;
            plan.trigger = trigger;
            plan.seed = seed;
            return poison_dataset(clean, plan);
        },
        "clean"_a, "poisoning_ratio"_a, "rule"_a = "fixed", "target_label"_a = 0, "trigger"_a,
        "seed"_a = 0);

    m.def("split_per_class", &split_per_class, "dataset"_a, "per_class"_a, "seed"_a);

    py::class_<MlpModel>(m, "MlpModel")
        .def_readonly("input_dim", &MlpModel::input_dim)
        .def_readonly("hidden_dim", &MlpModel::hidden_dim)
        .def_readonly("num_classes", &MlpModel::num_classes)
        .def("save", &save_checkpoint, "path"_a)
        .def_static("load", &load_checkpoint, "path"_a);

    m.def(
        "init_mlp",
        [](std::size_t input_dim, std::size_t hidden_dim, std::size_t num_classes,
           std::uint64_t seed) { return init_mlp(input_dim, hidden_dim, num_classes, Rng(seed)); },
        "input_dim"_a, "hidden_dim"_a, "num_classes"_a, "seed"_a = 1);

    m.def(
        "train",
        [](const Dataset& train_set, const MlpModel& init, std::size_t epochs,
           std::size_t batch_size, double learning_rate, const std::string& optimizer, double rho,
           std::uint64_t seed) {
            const TrainConfig cfg =
                make_train_config(epochs, batch_size, learning_rate, optimizer, rho, seed);
            TrainResult result = train(train_set, init, cfg);
            py::list log;
            for (const auto& e : result.log.epochs)
                log.append(py::dict("epoch"_a = e.epoch, "loss"_a = e.loss));
            return py::make_tuple(result.model, log);
        },
        "train_set"_a, "init"_a, "epochs"_a = 40, "batch_size"_a = 64, "learning_rate"_a = 0.05,
        "optimizer"_a = "sgd", "rho"_a = 0.1, "seed"_a = 0);

    m.def("extract_features",
          [](const MlpModel& model, const Dataset& ds) {
              return matrix_to_np(extract_features(model, ds));
          },
          "model"_a, "dataset"_a);

    m.def(
        "tac",
        [](const MlpModel& model, const Dataset& clean_set, const TriggerSpec& trigger) {
            const TacProfile profile = tac(model, clean_set, trigger);
            py::array_t<double> arr(profile.values.size());
            std::copy(profile.values.begin(), profile.values.end(), arr.mutable_data());
            return arr;
        },
        "model"_a, "clean_set"_a, "trigger"_a);

    m.def(
        "topk_tac",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& values,
           std::size_t k) {
            TacProfile profile;
            profile.values = np_to_vec(values);
            return topk_tac(profile, k);
        },
        "tac_values"_a, "k"_a = 2);

    m.def("weight_norms", [](const MlpModel& model) {
        const std::vector<double> norms = weight_norms(model);
        py::array_t<double> arr(norms.size());
        std::copy(norms.begin(), norms.end(), arr.mutable_data());
        return arr;
    });

    m.def(
        "silhouette",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& features,
           const std::vector<bool>& group_a) { return silhouette(np_to_matrix(features), group_a); },
        "features"_a, "in_group_a"_a);

    m.def(
        "intra_class_variance",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& features,
           const std::vector<int>& labels, int num_classes) {
            return intra_class_variance(np_to_matrix(features), labels, num_classes);
        },
        "features"_a, "labels"_a, "num_classes"_a);

    py::class_<ScalerState>(m, "ScalerState")
        .def_readonly("reduced_dim", &ScalerState::reduced_dim)
        .def_readonly("eigen_floor", &ScalerState::eigen_floor)
        .def_readonly("degenerate", &ScalerState::degenerate)
        .def("save", &save_scaler, "path"_a)
        .def_static("load", &load_scaler, "path"_a);

    m.def(
        "fit_scaler",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& train_features,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& clean_features,
           double variance_target, std::size_t max_dim, double eigen_floor) {
            return fit_scaler(np_to_matrix(train_features), np_to_matrix(clean_features),
                              variance_target, max_dim, eigen_floor);
        },
        "train_features"_a, "clean_features"_a, "variance_target"_a = 0.95, "max_dim"_a = 64,
        "eigen_floor"_a = 1e-6);

    m.def(
        "scale",
        [](const ScalerState& state,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& features) {
            if (features.ndim() == 1) {
                const std::vector<double> out = scale(state, np_to_vec(features));
                py::array_t<double> arr(out.size());
                std::copy(out.begin(), out.end(), arr.mutable_data());
                return py::object(arr);
            }
            return py::object(matrix_to_np(scale_rows(state, np_to_matrix(features))));
        },
        "state"_a, "features"_a);

    m.def(
        "collect_potential_clean",
        [](const MlpModel& model, const Dataset& train_set, std::size_t cap_per_class,
           double confidence_threshold) {
            return collect_potential_clean(model, train_set, cap_per_class, confidence_threshold);
        },
        "model"_a, "train_set"_a, "cap_per_class"_a = 100, "confidence_threshold"_a = 0.95);

    m.def(
        "detect_ac",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& features,
           const std::vector<int>& labels, int num_classes, std::uint64_t seed) {
            return detection_to_dict(detect_ac(np_to_matrix(features), labels, num_classes, Rng(seed)));
        },
        "features"_a, "labels"_a, "num_classes"_a, "seed"_a = 0);

    m.def(
        "detect_ss",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& features,
           const std::vector<int>& labels, int num_classes, double expected_fraction,
           std::uint64_t seed) {
            return detection_to_dict(
                detect_ss(np_to_matrix(features), labels, num_classes, expected_fraction, Rng(seed)));
        },
        "features"_a, "labels"_a, "num_classes"_a, "expected_fraction"_a, "seed"_a = 0);

    m.def(
        "detect_spectre_lite",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& features,
           const std::vector<int>& labels, int num_classes, double expected_fraction,
           std::size_t subspace_k, std::uint64_t seed) {
            return detection_to_dict(detect_spectre_lite(np_to_matrix(features), labels,
                                                         num_classes, expected_fraction, subspace_k,
                                                         Rng(seed)));
        },
        "features"_a, "labels"_a, "num_classes"_a, "expected_fraction"_a, "subspace_k"_a = 8,
        "seed"_a = 0);

    m.def(
        "detect_gram",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& features,
           const std::vector<int>& labels, int num_classes,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& reference_features,
           const std::vector<int>& reference_labels, double target_fpr) {
            return detection_to_dict(detect_gram(np_to_matrix(features), labels, num_classes,
                                                 np_to_matrix(reference_features), reference_labels,
                                                 target_fpr));
        },
        "features"_a, "labels"_a, "num_classes"_a, "reference_features"_a, "reference_labels"_a,
        "target_fpr"_a = 0.05);

    m.def(
        "confusion",
        [](const std::vector<bool>& flags, const std::vector<bool>& truth) {
            const MetricReport r = confusion(flags, truth);
            py::dict out;
            out["tpr"] = r.tpr ? py::object(py::float_(*r.tpr)) : py::none();
            out["fpr"] = r.fpr ? py::object(py::float_(*r.fpr)) : py::none();
            out["f1"] = r.f1 ? py::object(py::float_(*r.f1)) : py::none();
            out["tp"] = r.tp;
            out["fp"] = r.fp;
            out["tn"] = r.tn;
            out["fn"] = r.fn;
            return out;
        },
        "flags"_a, "truth"_a);

    m.def(
        "auc",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& scores,
           const std::vector<bool>& truth) { return auc(np_to_vec(scores), truth); },
        "scores"_a, "truth"_a);

    m.def(
        "pearson",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& y) {
            return pearson(np_to_vec(x), np_to_vec(y));
        },
        "x"_a, "y"_a);

    m.def(
        "proposition_check",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& w,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& x_tilde,
           double rho, double eta) {
            const PropositionReport r =
                proposition_check(np_to_vec(a), np_to_matrix(w), np_to_vec(x_tilde), rho, eta);
            py::list neurons;
            for (const auto& nr : r.neurons)
                neurons.append(py::dict(
                    "preactivation"_a = nr.preactivation, "a"_a = nr.a, "active"_a = nr.active,
                    "applicable"_a = nr.applicable, "condition"_a = nr.condition,
                    "delta_sam"_a = nr.delta_sam, "delta_sgd"_a = nr.delta_sgd,
                    "sam_greater"_a = nr.sam_greater));
            return py::dict("neurons"_a = neurons,
                            "active_condition_true"_a = r.active_condition_true,
                            "sam_greater_among_true"_a = r.sam_greater_among_true,
                            "negative_a_among_true"_a = r.negative_a_among_true);
        },
        "a"_a, "w"_a, "x_tilde"_a, "rho"_a = 1e-3, "eta"_a = 1e-3);

    m.def(
        "run_pipeline",
        [](const py::object& config) {
            const RunConfig cfg = parse_run_config(py_to_json(config));
            const PipelineReport report = run_pipeline(cfg);
            return json_to_py(report.to_json());
        },
        "config"_a, "Run the full pipeline and return the report as a dict");

    m.def(
        "run",
        [](const py::object& config, const std::string& out_dir) {
            RunConfig cfg = parse_run_config(py_to_json(config));
            if (!out_dir.empty()) cfg.output_dir = out_dir;
            const PipelineReport report = run_pipeline(cfg);
            write_run_artifacts(report, cfg.output_dir);
            return json_to_py(report.to_json());
        },
        "config"_a, "out_dir"_a = "",
        "Run the full pipeline, write report/metrics/feature artifacts, return the report");

    m.attr("__version__") = "0.1.0";
}
