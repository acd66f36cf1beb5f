#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sampsd/linalg.hpp"
#include "sampsd/pipeline.hpp"

namespace sampsd {

struct CliOptions {
    std::string config_path;
    std::string out_dir;  // overrides config output_dir when non-empty
    std::optional<std::uint64_t> seed;
    int jobs = 1;
    // sweep overrides
    std::string axis;
    std::vector<double> values;
};

// Exit codes: 0 success, 1 pipeline failure, 2 config error.
int cmd_run(const CliOptions& opts);
int cmd_sweep(const CliOptions& opts);
int cmd_correlate(const CliOptions& opts);
int cmd_gen_data(const CliOptions& opts);
int cmd_inspect(const CliOptions& opts);

// Feature dump: magic "FEAT", u32 version=1, u32 n, u32 d (little-endian),
// then row-major little-endian 64-bit reals, plus a sibling JSON manifest
// {labels, poison_flags, variant}.
void write_feature_dump(const std::string& bin_path, const std::string& manifest_path,
                        const Matrix& features, const std::vector<int>& labels,
                        const std::vector<bool>& poison_flags, const std::string& variant);
Matrix read_feature_dump(const std::string& bin_path);

// Full artifact dump for one finished run (report.json, metrics.csv, feature
// dumps, checkpoints, tac csv, plots). Used by cmd_run and exposed for tests.
void write_run_artifacts(const PipelineReport& report, const std::string& out_dir);

}  // namespace sampsd
