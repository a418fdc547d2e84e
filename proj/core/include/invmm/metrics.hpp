#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "invmm/denoiser.hpp"
#include "invmm/invert.hpp"

namespace invmm {

/// Declares which end of the score axis marks a positive. The inversion
/// measure uses lower_is_positive (lower divergence = more memorized);
/// infinite scores always rank as least positive under that orientation.
enum class ScoreOrientation { lower_is_positive, higher_is_positive };

struct ScoredEntry {
    std::size_t id = 0;
    double score = 0.0; // may be +infinity
    bool positive = false;
};

struct ScoredSet {
    std::vector<ScoredEntry> entries;
    void validate() const; // unique ids, both labels present
};

/// Probability that a random positive outranks a random negative, ties
/// counted 1/2 (rank-sum form).
double auc(const ScoredSet& scored, ScoreOrientation orientation);

/// Max true-positive rate over thresholds whose false-positive rate stays
/// within the budget; thresholds sweep the observed scores.
double tpr_at_fpr(const ScoredSet& scored, double fpr_budget, ScoreOrientation orientation);

/// Consistency of the measure with the nearest-neighbor test: take the
/// |S_nn| lowest-scoring ids (ties at the cutoff broken by ascending id)
/// and intersect with S_nn. Returns nullopt when S_nn is empty (the N/A
/// convention).
std::optional<double> iou_collation(const std::vector<std::pair<std::size_t, double>>& scores,
                                    const std::set<std::size_t>& s_nn);

struct LossBaselineConfig {
    std::size_t noise_count = 16;
    std::size_t timestep_count = 50;
    LossMode mode = LossMode::eps0;
    std::uint64_t seed = 0;
};

/// Membership-style statistic: per-image average denoising loss under
/// standard Gaussian noise (lower = more member-like). Deterministic for a
/// fixed seed.
std::vector<double> loss_mi_baseline(const Denoiser& model, const NoiseSchedule& sched,
                                     const std::vector<Tensor>& images,
                                     const LossBaselineConfig& config,
                                     std::optional<std::vector<std::size_t>> cond_ids = std::nullopt);

} // namespace invmm
