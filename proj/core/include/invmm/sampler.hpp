#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "invmm/denoiser.hpp"
#include "invmm/rng.hpp"
#include "invmm/schedule.hpp"

namespace invmm {

struct SamplerConfig {
    std::size_t ddim_steps = 50;
    double eta = 0.0;       // 0 = deterministic; 1 = ancestral-level noise
    double cfg_scale = 1.0; // used only for conditional sampling
    std::uint64_t seed = 0;
    void validate(const NoiseSchedule& sched) const;
};

/// Deterministic accelerated sampling over the evenly spaced sub-schedule
/// {T/S, 2T/S, ..., T}. With eta > 0 the stochastic term is drawn from
/// `rng` (or a generator seeded from config.seed when rng is null).
/// initial_noise: [B, N] or [N]; cond_ids (conditional models): one id per
/// row, guided at config.cfg_scale. Returns the generated x0, same shape
/// as the input noise.
Tensor ddim_sample(const Denoiser& model, const NoiseSchedule& sched, const Tensor& initial_noise,
                   const SamplerConfig& config,
                   const std::optional<std::vector<std::size_t>>& cond_ids = std::nullopt,
                   Rng* rng = nullptr);

/// Same recurrence with a smoothed condition embedding [B, cond_input_dim].
Tensor ddim_sample_embedded(const Denoiser& model, const NoiseSchedule& sched,
                            const Tensor& initial_noise, const SamplerConfig& config,
                            const Tensor& cond_emb, Rng* rng = nullptr);

} // namespace invmm
