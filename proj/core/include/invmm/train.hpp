#pragma once

#include <cstdint>

#include "invmm/dataset.hpp"
#include "invmm/denoiser.hpp"

namespace invmm {

struct TrainConfig {
    std::size_t epochs = 200;
    std::size_t batch_size = 32;
    double lr = 1e-3;
    std::uint64_t seed = 0;
    bool conditional = false;
    double cond_drop_prob = 0.1; // chance a condition is replaced by the null id
    double ema_decay = 0.98;
    void validate() const;
};

struct TrainReport {
    std::vector<double> epoch_ema_loss; // EMA of the noise-prediction loss at each epoch end
    double final_ema = 0.0;
    std::size_t steps = 0;
};

/// Train a noise-prediction model on the (duplication-expanded) dataset
/// with the standard objective: per example, a uniform timestep and a
/// standard Gaussian noise draw. Deterministic given config + seed; the
/// returned model is frozen. Throws TrainingError (with the step index)
/// if the loss goes non-finite.
Denoiser train_denoiser(const ToyDataset& data, const NoiseSchedule& sched,
                        const DenoiserConfig& model_cfg, const TrainConfig& cfg,
                        TrainReport* report = nullptr);

/// Continue training an existing (unfrozen) model; optimizer state starts
/// fresh. Used by checkpoint resumption.
void train_denoiser_inplace(Denoiser& model, const ToyDataset& data, const NoiseSchedule& sched,
                            const TrainConfig& cfg, TrainReport* report = nullptr);

} // namespace invmm
