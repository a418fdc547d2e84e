#pragma once

#include <stdexcept>
#include <string>

namespace invmm {

// Caller broke an operation's precondition (shape mismatch, non-scalar
// backward root, out-of-range timestep, ...).
struct ContractError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Math domain violation: log of a nonpositive value, singular reweighting,
// non-finite function evaluation.
struct MathDomainError : std::domain_error {
    using std::domain_error::domain_error;
};

// Invalid run configuration; the CLI maps this to exit code 2.
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Model training diverged or received a non-finite gradient.
struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Ranking metric got degenerate input (single-class label set).
struct MetricError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Replication-judge calibration failed (e.g. all images identical).
struct CalibrationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Experiment grid cell does not resolve to a usable checkpoint/result.
struct ManifestError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace invmm
