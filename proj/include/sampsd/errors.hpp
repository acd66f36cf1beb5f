#pragma once

#include <stdexcept>
#include <string>

namespace sampsd {

// Invalid values: non-finite entries, symmetry violations, bad parameters.
struct value_error : std::runtime_error {
    explicit value_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape/dimension mismatches.
struct dimension_error : std::runtime_error {
    explicit dimension_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed files: bad magic, truncated payload, inconsistent counts.
struct format_error : std::runtime_error {
    explicit format_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Unsatisfiable or ill-formed configuration (plans, run configs).
struct config_error : std::runtime_error {
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// A metric that has no defined value for the given inputs (0/0, one class absent).
struct undefined_metric_error : std::runtime_error {
    explicit undefined_metric_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Training produced a non-finite loss.
struct training_diverged_error : std::runtime_error {
    explicit training_diverged_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace sampsd
