#include "sampsd/commands.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <numeric>
#include <thread>

#include <json.hpp>

#include "sampsd/errors.hpp"
#include "sampsd/metrics.hpp"
#include "sampsd/svg.hpp"

namespace fs = std::filesystem;

namespace sampsd {

namespace {

nlohmann::json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file: " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw config_error("config is not valid JSON: " + std::string(e.what()));
    }
}

RunConfig load_config(const CliOptions& opts) {
    if (opts.config_path.empty()) throw config_error("--config is required");
    RunConfig cfg = parse_run_config(load_json_file(opts.config_path));
    if (!opts.out_dir.empty()) cfg.output_dir = opts.out_dir;
    if (opts.seed) {
        cfg.seed = *opts.seed;
        cfg.sweep_seeds.clear();  // an explicit seed overrides the sweep list
    }
    return cfg;
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw format_error("cannot write " + path);
    out << content;
}

void write_u32_le(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<char*>(b), 4);
}

std::uint32_t read_u32_le(std::istream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw format_error("feature dump: truncated header in " + path);
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
}

// Run fn(0..n-1) on `jobs` threads; cells must be independent. The first
// exception wins and is rethrown after all workers join.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
    jobs = std::max(1, jobs);
    if (jobs == 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < std::min<int>(jobs, static_cast<int>(n)); ++t)
        pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

std::string attack_color(const std::string& name) {
    if (name == "patch") return "#1f77b4";
    if (name == "blend") return "#d62728";
    if (name == "blend_weak") return "#ff7f0e";
    if (name == "patch_a2a") return "#2ca02c";
    return "#9467bd";
}

std::string detector_shape(const std::string& name) {
    if (name == "ac") return "circle";
    if (name == "ss") return "square";
    if (name == "spectre_lite") return "triangle";
    if (name == "gram") return "diamond";
    return "circle";
}

std::string variant_color(const std::string& variant) {
    if (variant == "sgd_raw") return "#7f7f7f";
    if (variant == "sgd_scaled") return "#ff7f0e";
    if (variant == "sam_raw") return "#1f77b4";
    if (variant == "sam_scaled") return "#d62728";
    return "#9467bd";
}

}  // namespace

void write_feature_dump(const std::string& bin_path, const std::string& manifest_path,
                        const Matrix& features, const std::vector<int>& labels,
                        const std::vector<bool>& poison_flags, const std::string& variant) {
    std::ofstream out(bin_path, std::ios::binary);
    if (!out) throw format_error("cannot write " + bin_path);
    out.write("FEAT", 4);
    write_u32_le(out, 1);
    write_u32_le(out, static_cast<std::uint32_t>(features.rows));
    write_u32_le(out, static_cast<std::uint32_t>(features.cols));
    for (double v : features.data) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        unsigned char b[8];
        for (int s = 0; s < 8; ++s) b[s] = static_cast<unsigned char>(bits >> (8 * s));
        out.write(reinterpret_cast<char*>(b), 8);
    }

    nlohmann::json manifest;
    manifest["labels"] = labels;
    std::vector<int> flags01;
    flags01.reserve(poison_flags.size());
    for (bool f : poison_flags) flags01.push_back(f ? 1 : 0);
    manifest["poison_flags"] = flags01;
    manifest["variant"] = variant;
    write_text(manifest_path, manifest.dump(2) + "\n");
}

Matrix read_feature_dump(const std::string& bin_path) {
    std::ifstream in(bin_path, std::ios::binary);
    if (!in) throw format_error("feature dump: cannot open " + bin_path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "FEAT", 4) != 0)
        throw format_error("feature dump: bad magic in " + bin_path);
    if (read_u32_le(in, bin_path) != 1)
        throw format_error("feature dump: unsupported version in " + bin_path);
    const std::uint32_t n = read_u32_le(in, bin_path);
    const std::uint32_t d = read_u32_le(in, bin_path);
    Matrix m(n, d);
    for (double& v : m.data) {
        unsigned char b[8];
        in.read(reinterpret_cast<char*>(b), 8);
        if (!in) throw format_error("feature dump: truncated payload in " + bin_path);
        std::uint64_t bits = 0;
        for (int s = 0; s < 8; ++s) bits |= std::uint64_t(b[s]) << (8 * s);
        std::memcpy(&v, &bits, 8);
    }
    return m;
}

namespace {

// 2-D PCA scatter of one variant's training features: poisoned vs clean
// target class vs everything else, subsampled for readability.
std::string feature_scatter_svg(const PipelineReport& report, const std::string& variant) {
    const Matrix& feats = report.train_features.at(variant);
    const PcaResult pca = pca_fit(feats, 1.0, 2);
    const std::size_t dims = pca.components.cols;

    auto project = [&](std::size_t row, std::size_t axis) {
        double s = 0.0;
        for (std::size_t c = 0; c < feats.cols; ++c)
            s += (feats(row, c) - pca.mean[c]) * pca.components(c, axis);
        return s;
    };

    svg::ScatterGroup other, target_clean, poisoned;
    other.name = "clean (other classes)";
    other.color = "#bbbbbb";
    other.shape = "circle";
    target_clean.name = "clean (target class)";
    target_clean.color = "#1f77b4";
    target_clean.shape = "circle";
    poisoned.name = "poisoned";
    poisoned.color = "#d62728";
    poisoned.shape = "triangle";

    const std::size_t stride = std::max<std::size_t>(1, feats.rows / 1200);
    for (std::size_t i = 0; i < feats.rows; ++i) {
        const double x = project(i, 0);
        const double y = dims > 1 ? project(i, 1) : 0.0;
        if (report.poison_truth[i])
            poisoned.points.push_back({x, y});
        else if (report.labels[i] == report.config.attack.target_label)
            target_clean.points.push_back({x, y});
        else if (i % stride == 0)
            other.points.push_back({x, y});
    }
    return svg::scatter_plot("features (" + variant + ")", "pc1", "pc2",
                             {other, target_clean, poisoned});
}

}  // namespace

void write_run_artifacts(const PipelineReport& report, const std::string& out_dir) {
    fs::create_directories(out_dir);
    const fs::path dir(out_dir);

    write_text((dir / "report.json").string(), report.to_json().dump(2) + "\n");
    write_text((dir / "metrics.csv").string(), report.metrics_csv());
    write_text((dir / "detections.csv").string(), report.detections_csv());
    write_text((dir / "train_log_sgd.csv").string(), report.log_sgd.to_csv());
    write_text((dir / "train_log_sam.csv").string(), report.log_sam.to_csv());
    write_text((dir / "tac_sgd.csv").string(), tac_csv(report.tac_sgd, report.weight_norms_sgd));
    write_text((dir / "tac_sam.csv").string(), tac_csv(report.tac_sam, report.weight_norms_sam));
    save_checkpoint(report.model_sgd, (dir / "checkpoint_sgd.bin").string());
    save_checkpoint(report.model_sam, (dir / "checkpoint_sam.bin").string());
    if (report.scaler_fitted) {
        save_scaler(report.scaler_sgd, (dir / "scaler_sgd.bin").string());
        save_scaler(report.scaler_sam, (dir / "scaler_sam.bin").string());
    }
    for (const auto& variant : report.variants) {
        write_feature_dump((dir / ("features_" + variant + ".bin")).string(),
                           (dir / ("features_" + variant + ".json")).string(),
                           report.train_features.at(variant), report.labels, report.poison_truth,
                           variant);
        write_text((dir / ("scatter_" + variant + ".svg")).string(),
                   feature_scatter_svg(report, variant));
    }
}

int cmd_run(const CliOptions& opts) {
    RunConfig cfg;
    try {
        cfg = load_config(opts);
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }
    try {
        const PipelineReport report = run_pipeline(cfg);
        write_run_artifacts(report, cfg.output_dir);
        std::cout << "run complete: " << cfg.output_dir << "/report.json\n";
        return 0;
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "pipeline failure: " << e.what() << "\n";
        return 1;
    }
}

namespace {

struct SweepRow {
    double axis_value;
    std::uint64_t seed;
    std::string attack, detector, variant;
    MetricReport metrics;
};

}  // namespace

int cmd_sweep(const CliOptions& opts) {
    RunConfig cfg;
    std::string axis;
    std::vector<double> values;
    std::vector<std::uint64_t> seeds;
    try {
        cfg = load_config(opts);
        axis = !opts.axis.empty() ? opts.axis : cfg.sweep_axis;
        values = !opts.values.empty() ? opts.values : cfg.sweep_values;
        seeds = cfg.sweep_seeds.empty() ? std::vector<std::uint64_t>{cfg.seed} : cfg.sweep_seeds;
        if (axis != "p" && axis != "rho") throw config_error("sweep axis must be 'p' or 'rho'");
        if (values.empty()) throw config_error("sweep values are missing");
        for (double v : values)
            if (v <= 0.0) throw config_error("sweep values must be positive");
        if (!std::is_sorted(values.begin(), values.end()))
            throw config_error("sweep values must be sorted ascending");
        if (axis == "p")
            for (double v : values)
                if (v >= 1.0) throw config_error("poisoning ratios must be < 1");
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }

    try {
        struct Cell {
            double value;
            std::uint64_t seed;
        };
        std::vector<Cell> cells;
        for (double v : values)
            for (std::uint64_t s : seeds) cells.push_back({v, s});

        std::vector<std::vector<SweepRow>> results(cells.size());
        parallel_for(cells.size(), opts.jobs, [&](std::size_t i) {
            RunConfig cell_cfg = cfg;
            cell_cfg.seed = cells[i].seed;
            if (axis == "p")
                cell_cfg.attack.poisoning_ratio = cells[i].value;
            else
                cell_cfg.train_sam.rho = cells[i].value;
            const PipelineReport report = run_pipeline(cell_cfg);
            for (const auto& o : report.outcomes)
                results[i].push_back({cells[i].value, cells[i].seed, cell_cfg.attack.name,
                                      o.detector, o.variant, o.metrics});
        });

        fs::create_directories(cfg.output_dir);
        const fs::path dir(cfg.output_dir);
        std::ostringstream csv;
        csv << "axis,axis_value,seed,attack,detector,variant,tpr,fpr,f1,auc\n";
        csv << std::setprecision(10);
        auto fmt = [](const std::optional<double>& v) {
            if (!v) return std::string("na");
            std::ostringstream s;
            s << std::setprecision(10) << *v;
            return s.str();
        };
        for (const auto& rows : results)
            for (const auto& r : rows)
                csv << axis << "," << r.axis_value << "," << r.seed << "," << r.attack << ","
                    << r.detector << "," << r.variant << "," << fmt(r.metrics.tpr) << ","
                    << fmt(r.metrics.fpr) << "," << fmt(r.metrics.f1) << "," << fmt(r.metrics.auc)
                    << "\n";
        write_text((dir / "sweep_summary.csv").string(), csv.str());

        // Mean TPR vs axis per detector/variant.
        std::map<std::string, svg::Series> series;
        for (double v : values) {
            std::map<std::string, std::pair<double, std::size_t>> acc;
            for (const auto& rows : results)
                for (const auto& r : rows) {
                    if (r.axis_value != v || !r.metrics.tpr) continue;
                    auto& slot = acc[r.detector + "/" + r.variant];
                    slot.first += *r.metrics.tpr;
                    slot.second += 1;
                }
            for (const auto& [key, slot] : acc) {
                auto& s = series[key];
                if (s.name.empty()) {
                    s.name = key;
                    const auto pos = key.find('/');
                    s.color = variant_color(key.substr(pos + 1));
                    s.dashed = key.substr(pos + 1).starts_with("sgd");
                }
                s.points.push_back({v, slot.first / static_cast<double>(slot.second)});
            }
        }
        std::vector<svg::Series> series_list;
        for (auto& [key, s] : series) series_list.push_back(std::move(s));
        write_text((dir / "sweep_tpr.svg").string(),
                   svg::line_plot("mean TPR vs " + axis, axis, "mean TPR", series_list));
        std::cout << "sweep complete: " << (dir / "sweep_summary.csv").string() << "\n";
        return 0;
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "pipeline failure: " << e.what() << "\n";
        return 1;
    }
}

int cmd_correlate(const CliOptions& opts) {
    RunConfig cfg;
    std::vector<std::string> attacks;
    std::vector<double> ratios;
    try {
        cfg = load_config(opts);
        attacks = cfg.correlate_attacks;
        ratios = cfg.correlate_ratios;
        if (attacks.empty() || ratios.empty())
            throw config_error("correlate needs a 'correlate' section with attacks and ratios");
        if (attacks.size() * ratios.size() < 8)
            throw config_error("correlate grid needs at least 8 (attack, ratio) cells");
        for (const auto& a : attacks) attack_preset(a);  // validates names
        for (double r : ratios)
            if (r <= 0.0 || r >= 1.0) throw config_error("correlate ratios must be in (0, 1)");
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }

    try {
        struct CellSpec {
            std::string attack;
            double ratio;
        };
        std::vector<CellSpec> specs;
        for (const auto& a : attacks)
            for (double r : ratios) specs.push_back({a, r});

        std::vector<CorrelationCell> cells(specs.size());
        parallel_for(specs.size(), opts.jobs, [&](std::size_t i) {
            RunConfig cell_cfg = cfg;
            cell_cfg.attack = attack_preset(specs[i].attack);
            cell_cfg.attack.poisoning_ratio = specs[i].ratio;
            cells[i] = run_correlation_cell(cell_cfg);
        });

        fs::create_directories(cfg.output_dir);
        const fs::path dir(cfg.output_dir);

        std::ostringstream csv;
        csv << "attack,poisoning_ratio,top2_tac,detector,auc\n";
        csv << std::setprecision(10);
        for (const auto& cell : cells)
            for (const auto& [det, auc_val] : cell.detector_auc) {
                csv << cell.attack << "," << cell.poisoning_ratio << "," << cell.top2_tac << ","
                    << det << ",";
                if (auc_val)
                    csv << *auc_val;
                else
                    csv << "na";
                csv << "\n";
            }
        write_text((dir / "correlation.csv").string(), csv.str());

        // Pearson r between Top-2 TAC and the mean detector AUC per cell.
        std::vector<double> tacs, mean_aucs;
        for (const auto& cell : cells) {
            double sum = 0.0;
            std::size_t count = 0;
            for (const auto& [det, auc_val] : cell.detector_auc)
                if (auc_val) {
                    sum += *auc_val;
                    ++count;
                }
            if (count == 0) continue;
            tacs.push_back(cell.top2_tac);
            mean_aucs.push_back(sum / static_cast<double>(count));
        }

        nlohmann::json out;
        out["schema_version"] = 1;
        out["n_cells"] = cells.size();
        out["n_cells_with_auc"] = tacs.size();
        try {
            out["pearson_r"] = pearson(tacs, mean_aucs);
            out["r_squared"] = r_squared(tacs, mean_aucs);
        } catch (const std::exception& e) {
            out["pearson_r"] = nullptr;
            out["r_squared"] = nullptr;
            out["note"] = std::string("correlation undefined: ") + e.what();
        }
        // Per-detector correlations as secondary diagnostics.
        nlohmann::json per_det = nlohmann::json::object();
        for (const auto& det : cfg.detectors) {
            std::vector<double> xs, ys;
            for (const auto& cell : cells) {
                const auto it = cell.detector_auc.find(det);
                if (it != cell.detector_auc.end() && it->second) {
                    xs.push_back(cell.top2_tac);
                    ys.push_back(*it->second);
                }
            }
            try {
                per_det[det] = pearson(xs, ys);
            } catch (const std::exception&) {
                per_det[det] = nullptr;
            }
        }
        out["per_detector_r"] = per_det;
        nlohmann::json cell_rows = nlohmann::json::array();
        for (const auto& cell : cells) {
            nlohmann::json aucs = nlohmann::json::object();
            for (const auto& [det, v] : cell.detector_auc)
                aucs[det] = v ? nlohmann::json(*v) : nlohmann::json(nullptr);
            cell_rows.push_back({{"attack", cell.attack},
                                 {"poisoning_ratio", cell.poisoning_ratio},
                                 {"top2_tac", cell.top2_tac},
                                 {"auc", aucs}});
        }
        out["cells"] = cell_rows;
        write_text((dir / "correlation.json").string(), out.dump(2) + "\n");

        // Scatter: shape = detector, color = attack.
        std::map<std::string, svg::ScatterGroup> groups;
        for (const auto& cell : cells)
            for (const auto& [det, auc_val] : cell.detector_auc) {
                if (!auc_val) continue;
                const std::string key = cell.attack + "/" + det;
                auto& g = groups[key];
                if (g.name.empty()) {
                    g.name = key;
                    g.color = attack_color(cell.attack);
                    g.shape = detector_shape(det);
                }
                g.points.push_back({cell.top2_tac, *auc_val});
            }
        std::vector<svg::ScatterGroup> group_list;
        for (auto& [key, g] : groups) group_list.push_back(std::move(g));
        write_text((dir / "correlation_scatter.svg").string(),
                   svg::scatter_plot("Top-2 TAC vs detector AUC", "top-2 tac", "auc", group_list));

        std::cout << "correlate complete: " << (dir / "correlation.json").string() << "\n";
        return 0;
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "pipeline failure: " << e.what() << "\n";
        return 1;
    }
}

int cmd_gen_data(const CliOptions& opts) {
    RunConfig cfg;
    try {
        cfg = load_config(opts);
        if (cfg.dataset.kind != DatasetConfig::Kind::synthetic)
            throw config_error("gen-data requires dataset.kind 'synthetic'");
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }
    try {
        fs::create_directories(cfg.output_dir);
        const fs::path dir(cfg.output_dir);
        Rng master(cfg.seed);

        Dataset train = gen_synthetic(cfg.dataset.num_classes, cfg.dataset.per_class_train,
                                      cfg.dataset.shape, cfg.dataset.noise_sigma,
                                      master.stream("dataset_train").next_u64(), "train");
        const Dataset test = gen_synthetic(cfg.dataset.num_classes, cfg.dataset.per_class_test,
                                           cfg.dataset.shape, cfg.dataset.noise_sigma,
                                           master.stream("dataset_test").next_u64(), "test");

        const PoisonPlan* plan_ptr = nullptr;
        PoisonPlan plan;
        if (cfg.attack.poisoning_ratio > 0.0) {
            plan.poisoning_ratio = cfg.attack.poisoning_ratio;
            plan.rule = cfg.attack.rule;
            plan.target_label = cfg.attack.target_label;
            plan.trigger = cfg.attack.build_trigger(train.shape);
            plan.seed = master.stream("poison").next_u64();
            train = poison_dataset(train, plan);
            plan_ptr = &plan;
        }

        save_idx(train, (dir / "train-images.idx").string(), (dir / "train-labels.idx").string());
        write_manifest(train, cfg.seed, plan_ptr, (dir / "train-manifest.json").string());
        save_idx(test, (dir / "test-images.idx").string(), (dir / "test-labels.idx").string());
        write_manifest(test, cfg.seed, nullptr, (dir / "test-manifest.json").string());
        std::cout << "gen-data complete: " << dir.string() << "\n";
        return 0;
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "pipeline failure: " << e.what() << "\n";
        return 1;
    }
}

int cmd_inspect(const CliOptions& opts) {
    try {
        std::string path = opts.config_path;
        if (path.empty()) throw config_error("--config must point at a report.json or run directory");
        if (fs::is_directory(path)) path = (fs::path(path) / "report.json").string();
        const nlohmann::json j = load_json_file(path);

        auto num = [](const nlohmann::json& v) -> std::string {
            if (v.is_null()) return "na";
            std::ostringstream s;
            s << std::fixed << std::setprecision(3) << v.get<double>();
            return s.str();
        };

        const auto& cfg = j.at("config");
        std::cout << "report: " << path << "\n";
        std::cout << "attack: " << cfg.at("attack").at("name").get<std::string>()
                  << "  p=" << cfg.at("attack").at("poisoning_ratio").get<double>()
                  << "  seed=" << cfg.at("seed").get<std::uint64_t>() << "\n";
        std::cout << "train_size: " << j.at("dataset").at("train_size").get<std::size_t>()
                  << "  poison_count: " << j.at("dataset").at("poison_count").get<std::size_t>()
                  << "\n";
        if (j.at("train").contains("final")) {
            const auto& f = j.at("train").at("final");
            std::cout << "final: sgd acc=" << num(f.at("sgd_clean_acc"))
                      << " asr=" << num(f.at("sgd_asr")) << " | sam acc="
                      << num(f.at("sam_clean_acc")) << " asr=" << num(f.at("sam_asr")) << "\n";
        }
        std::cout << "tac: top2 sgd=" << num(j.at("tac").at("top2_sgd"))
                  << " sam=" << num(j.at("tac").at("top2_sam")) << "\n\n";
        std::cout << std::left << std::setw(14) << "detector" << std::setw(12) << "variant"
                  << std::right << std::setw(8) << "tpr" << std::setw(8) << "fpr" << std::setw(8)
                  << "f1" << std::setw(8) << "auc" << "\n";
        for (const auto& d : j.at("detections")) {
            std::cout << std::left << std::setw(14) << d.at("detector").get<std::string>()
                      << std::setw(12) << d.at("variant").get<std::string>() << std::right
                      << std::setw(8) << num(d.at("tpr")) << std::setw(8) << num(d.at("fpr"))
                      << std::setw(8) << num(d.at("f1")) << std::setw(8) << num(d.at("auc"))
                      << "\n";
        }
        return 0;
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "inspect failure: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace sampsd
