#pragma once

#include <vector>

#include "invmm/invert.hpp"

namespace invmm {

/// Per-position categorical distribution over the condition vocabulary,
/// parameterized by unnormalized log-probabilities. Rows of
/// softmax(logits) are the category probabilities.
struct PromptDistribution {
    Var logits;       // [M, V], trainable
    double tau = 2.0; // Gumbel-Softmax temperature

    std::size_t positions() const { return logits.value().extent(0); }
    std::size_t vocab() const { return logits.value().extent(1); }
    /// softmax(logits) as plain rows.
    Tensor probabilities() const;
    /// Shannon entropy of each position's categorical.
    std::vector<double> row_entropies() const;
};

/// Uniform initialization: all logits zero.
PromptDistribution init_prompt_dist(std::size_t positions, std::size_t vocab, double tau);

/// Relaxed draw: rows of softmax((logits + g)/tau) with i.i.d. Gumbel g.
/// one_hot marks hard (discretized) token rows.
struct SmoothedTokens {
    Var weights; // [M, V], rows sum to 1
    bool one_hot = false;
};

SmoothedTokens gumbel_softmax_sample(const PromptDistribution& dist, Rng& rng);
/// Same relaxation with caller-supplied Gumbel perturbations [M, V]
/// (gradient checks and temperature-limit comparisons need fixed draws).
SmoothedTokens gumbel_softmax_sample(const PromptDistribution& dist, const Tensor& gumbels);
/// Hard one-hot rows for given token ids (the "plus discretization" path).
SmoothedTokens one_hot_tokens(const std::vector<std::size_t>& ids, std::size_t vocab);

/// Embedding of smoothed tokens: row i maps to sum_j w_ij * table_j; the
/// output lies in the convex hull of the table rows.
Var embed_smooth(const SmoothedTokens& tokens, const Var& embedding_table);

/// Hard draw per position: argmax_j (logits_ij + g_ij), fresh Gumbel draws,
/// ties broken toward the lowest index. Samples the categorical exactly.
std::vector<std::size_t> discretize(const PromptDistribution& dist, Rng& rng);

/// Mean over positions of KL(softmax(logits_row) || prior). The prior must
/// be a strictly positive categorical over the vocabulary.
Var condition_regularizer(const PromptDistribution& dist, const std::vector<double>& prior);

struct PromptInvConfig {
    std::size_t positions = 1; // M
    double tau = 2.0;
    double cr_weight = 0.0;            // weight of the condition regularizer
    std::vector<double> cfg_scales = {1, 2, 3, 4, 5, 6, 7}; // sensitivity sweep
    std::vector<double> prior;         // empty = uniform
    void validate(const Denoiser& model) const;
};

struct JointInversionResult {
    InversionResult inversion; // score remains the noise-distribution divergence
    PromptDistribution prompt;
};

/// Joint inversion of noise and condition distributions: the denoising
/// error is estimated through a fresh Gumbel-Softmax token draw per noise
/// draw, embedded as a convex combination of the (frozen) embedding table
/// rows. Sensitivity tests generate with smoothed conditions, counting a
/// sample as replicated if any configured guidance scale replicates.
JointInversionResult joint_invert(const Denoiser& model, const NoiseSchedule& sched,
                                  const Tensor& x0, const InversionConfig& inv_config,
                                  const PromptInvConfig& prompt_config,
                                  const ReplicationJudge& judge);

/// CSV export: position, per-category probabilities, entropy.
std::string prompt_dist_csv(const PromptDistribution& dist);

} // namespace invmm
