#include "invmm/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "invmm/checkpoint.hpp"
#include "invmm/csvio.hpp"
#include "invmm/errors.hpp"
#include "invmm/parallel.hpp"

namespace invmm {

double median_finite(std::vector<double> scores) {
    scores.erase(std::remove_if(scores.begin(), scores.end(),
                                [](double s) { return !std::isfinite(s); }),
                 scores.end());
    if (scores.empty()) return std::numeric_limits<double>::infinity();
    std::sort(scores.begin(), scores.end());
    const std::size_t n = scores.size();
    return n % 2 == 1 ? scores[n / 2] : 0.5 * (scores[n / 2 - 1] + scores[n / 2]);
}

namespace {

std::uint64_t name_salt(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

ExperimentTable run_grid(const ExperimentManifest& manifest) {
    if (manifest.cells.empty()) throw ManifestError("experiment grid has no cells");
    for (const auto& cell : manifest.cells) {
        if (!std::filesystem::exists(cell.checkpoint)) {
            throw ManifestError("cell '" + cell.name + "' is missing its checkpoint: " +
                                cell.checkpoint.string());
        }
        if (cell.target_ids.empty()) {
            throw ManifestError("cell '" + cell.name + "' has no target images");
        }
    }
    const ToyDataset dataset = load_dataset(manifest.dataset_path);

    struct Job {
        std::size_t cell_index;
        std::size_t image_id;
    };
    std::vector<Job> jobs;
    for (std::size_t c = 0; c < manifest.cells.size(); ++c) {
        for (std::size_t id : manifest.cells[c].target_ids) {
            if (id >= dataset.images.size()) {
                throw ManifestError("cell '" + manifest.cells[c].name + "' target id " +
                                    std::to_string(id) + " out of dataset range");
            }
            jobs.push_back({c, id});
        }
    }

    // One model load per cell, shared read-only by that cell's jobs.
    std::vector<LoadedCheckpoint> loaded;
    loaded.reserve(manifest.cells.size());
    for (const auto& cell : manifest.cells) {
        loaded.push_back(load_checkpoint(cell.checkpoint));
    }
    const ReplicationJudge judge(manifest.judge);

    std::vector<InversionRecord> rows(jobs.size());
    parallel_for(jobs.size(), manifest.workers, [&](std::size_t j) {
        const Job& job = jobs[j];
        const ExperimentCellSpec& cell = manifest.cells[job.cell_index];
        const LoadedCheckpoint& ckpt = loaded[job.cell_index];
        InversionConfig cfg = manifest.inversion;
        cfg.seed = Rng::derive(Rng::derive(manifest.base_seed, name_salt(cell.name)), job.image_id);
        std::optional<std::size_t> cond_id;
        if (ckpt.model.conditional()) cond_id = dataset.labels.at(job.image_id);
        const InversionResult res =
            cell.fixed_lambda
                ? fixed_lambda_invert(ckpt.model, ckpt.schedule, dataset.images[job.image_id], cfg,
                                      judge, *cell.fixed_lambda, cond_id)
                : invert(ckpt.model, ckpt.schedule, dataset.images[job.image_id], cfg, judge,
                         cond_id);
        rows[j] = InversionRecord{cell.name, job.image_id, res.score, res.success, res.stop_step};
    });

    ExperimentTable table;
    table.rows = std::move(rows);
    for (const auto& cell : manifest.cells) {
        CellSummary s;
        s.cell = cell.name;
        std::vector<double> scores;
        for (const auto& r : table.rows) {
            if (r.cell != cell.name) continue;
            ++s.n;
            s.successes += r.success ? 1 : 0;
            scores.push_back(r.score);
        }
        s.median_score = median_finite(scores);
        s.success_rate = s.n ? static_cast<double>(s.successes) / static_cast<double>(s.n) : 0.0;
        table.summary.push_back(std::move(s));
    }
    return table;
}

} // namespace

ExperimentTable run_duplication_experiment(const ExperimentManifest& manifest) {
    return run_grid(manifest);
}

ExperimentTable run_epoch_experiment(const ExperimentManifest& manifest) {
    return run_grid(manifest);
}

ExperimentTable run_lambda_ablation(const ExperimentManifest& manifest) {
    for (const auto& cell : manifest.cells) {
        if (!cell.fixed_lambda && cell.name != "adaptive") {
            // ablation cells are "adaptive" or "fixed:<value>"
            throw ManifestError("lambda ablation cell '" + cell.name +
                                "' must be adaptive or carry a fixed lambda");
        }
    }
    return run_grid(manifest);
}

std::string results_csv(const ExperimentTable& table) {
    std::string out = "cell,image_id,score,success,stop_step\n";
    for (const auto& r : table.rows) {
        out += csv_line({r.cell, std::to_string(r.image_id), format_double(r.score),
                         r.success ? "true" : "false", std::to_string(r.stop_step)});
    }
    return out;
}

std::string summary_csv(const ExperimentTable& table) {
    std::string out = "cell,median_score,success_rate,n\n";
    for (const auto& s : table.summary) {
        out += csv_line({s.cell, format_double(s.median_score), format_double(s.success_rate),
                         std::to_string(s.n)});
    }
    return out;
}

} // namespace invmm
