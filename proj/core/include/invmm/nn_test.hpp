#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "invmm/dataset.hpp"
#include "invmm/judge.hpp"
#include "invmm/sampler.hpp"

namespace invmm {

enum class CondSampling { uniform, frequency };

CondSampling cond_sampling_from_string(const std::string& s);
std::string to_string(CondSampling m);

struct NnTestResult {
    std::set<std::size_t> replicated_ids; // S_nn
    std::vector<std::size_t> hit_counts;  // per image id
    std::vector<std::optional<std::size_t>> first_hit_sample; // sample index of first hit
    std::size_t n_samples = 0;
};

/// Draw n_samples latents from the standard Gaussian (and, for conditional
/// models, condition ids uniform over classes or weighted by training
/// frequency), generate, and record which training images are replicated.
NnTestResult nearest_neighbor_test(const Denoiser& model, const NoiseSchedule& sched,
                                   const ToyDataset& dataset, std::size_t n_samples,
                                   const ReplicationJudge& judge, const SamplerConfig& sampler,
                                   Rng& rng, CondSampling cond_mode = CondSampling::uniform,
                                   std::size_t batch = 64);

/// CSV export: image_id, hit_count, first_hit_sample_index (-1 if none).
std::string nn_result_csv(const NnTestResult& result);

} // namespace invmm
