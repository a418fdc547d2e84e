#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "invmm/dataset.hpp"
#include "invmm/invert.hpp"
#include "invmm/judge.hpp"

namespace invmm {

/// One grid cell: a trained checkpoint plus the image ids to invert.
/// `fixed_lambda` switches the cell to the pinned-weight loop (the
/// weight-ablation grid); adaptive otherwise.
struct ExperimentCellSpec {
    std::string name;
    std::filesystem::path checkpoint;
    std::vector<std::size_t> target_ids;
    std::optional<double> fixed_lambda;
};

struct ExperimentManifest {
    std::filesystem::path dataset_path;
    std::vector<ExperimentCellSpec> cells;
    InversionConfig inversion;
    JudgeConfig judge; // beta already resolved (> 0)
    std::uint64_t base_seed = 0;
    std::size_t workers = 1;
};

struct InversionRecord {
    std::string cell;
    std::size_t image_id = 0;
    double score = 0.0;
    bool success = false;
    std::size_t stop_step = 0;
};

struct CellSummary {
    std::string cell;
    double median_score = 0.0; // median of finite scores; +inf when none
    double success_rate = 0.0;
    std::size_t n = 0;
    std::size_t successes = 0;
};

struct ExperimentTable {
    std::vector<InversionRecord> rows;
    std::vector<CellSummary> summary;
};

/// Median of the finite entries; +infinity when none are finite.
double median_finite(std::vector<double> scores);

/// Grid drivers. All three share the mechanics (invert every target of
/// every cell, reduce per-cell statistics); they differ in what the grid
/// factor means, which the caller encodes in the cell specs. Missing
/// checkpoints raise ManifestError before any work starts. Every inversion
/// seed derives from (base_seed, cell name, image id), so worker count
/// never changes results.
ExperimentTable run_duplication_experiment(const ExperimentManifest& manifest);
ExperimentTable run_epoch_experiment(const ExperimentManifest& manifest);
ExperimentTable run_lambda_ablation(const ExperimentManifest& manifest);

std::string results_csv(const ExperimentTable& table);
std::string summary_csv(const ExperimentTable& table);

} // namespace invmm
