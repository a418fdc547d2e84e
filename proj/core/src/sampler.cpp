#include "invmm/sampler.hpp"

#include <cmath>

#include "invmm/errors.hpp"

namespace invmm {

void SamplerConfig::validate(const NoiseSchedule& sched) const {
    if (ddim_steps < 1 || ddim_steps > sched.steps()) {
        throw ConfigError("ddim_steps must lie in [1, T]");
    }
    if (sched.steps() % ddim_steps != 0) {
        throw ConfigError("ddim_steps must divide the diffusion step count");
    }
    if (!(eta >= 0.0 && eta <= 1.0)) throw ConfigError("eta must lie in [0, 1]");
    if (cfg_scale < 0.0) throw ConfigError("cfg_scale must be >= 0");
}

namespace {

// One reverse step t -> t_prev given the model's noise prediction:
//   x0_hat  = (x_t - sqrt(1-ab_t) eps_hat) / sqrt(ab_t)
//   sigma   = eta sqrt((1-ab_prev)/(1-ab_t)) sqrt(1 - ab_t/ab_prev)
//   x_prev  = sqrt(ab_prev) x0_hat + sqrt(1-ab_prev-sigma^2) eps_hat + sigma z
Tensor ddim_step(const Tensor& x_t, const Tensor& eps_hat, double ab_t, double ab_prev, double eta,
                 Rng* rng) {
    const double sa = std::sqrt(ab_t);
    const double sb = std::sqrt(1.0 - ab_t);
    Tensor x_prev(x_t.shape());
    double sigma = 0.0;
    if (eta > 0.0 && ab_prev < 1.0) {
        sigma = eta * std::sqrt((1.0 - ab_prev) / (1.0 - ab_t)) * std::sqrt(1.0 - ab_t / ab_prev);
    }
    const double c0 = std::sqrt(ab_prev);
    const double c1 = std::sqrt(std::max(0.0, 1.0 - ab_prev - sigma * sigma));
    for (std::size_t i = 0; i < x_t.size(); ++i) {
        const double x0_hat = (x_t[i] - sb * eps_hat[i]) / sa;
        double v = c0 * x0_hat + c1 * eps_hat[i];
        if (sigma > 0.0) v += sigma * rng->normal();
        x_prev[i] = v;
    }
    return x_prev;
}

struct CondView {
    const std::vector<std::size_t>* ids = nullptr;
    const Tensor* emb = nullptr;
};

Tensor run_ddim(const Denoiser& model, const NoiseSchedule& sched, const Tensor& initial_noise,
                const SamplerConfig& config, const CondView& cond, Rng* rng) {
    config.validate(sched);
    const bool was_vector = initial_noise.rank() == 1;
    Tensor x = was_vector ? Tensor({1, initial_noise.size()}, initial_noise.vec()) : initial_noise;
    if (x.rank() != 2 || x.extent(1) != model.config().data_dim) {
        throw ContractError("initial noise must have the model's data dimensionality");
    }
    const std::size_t batch = x.extent(0);
    if (model.conditional() && !cond.ids && !cond.emb) {
        throw ContractError("conditional model needs condition ids or embeddings to sample");
    }
    if (!model.conditional() && (cond.ids || cond.emb)) {
        throw ContractError("unconditional model cannot take conditions");
    }
    if (cond.ids && cond.ids->size() != batch) {
        throw ContractError("one condition id per sample row required");
    }

    Rng local(config.seed);
    if (config.eta > 0.0 && rng == nullptr) rng = &local;

    Tensor cond_emb;
    if (cond.ids) {
        cond_emb = model.embed_ids_plain(*cond.ids);
    } else if (cond.emb) {
        cond_emb = *cond.emb;
    }

    const std::size_t stride = sched.steps() / config.ddim_steps;
    for (std::size_t k = config.ddim_steps; k >= 1; --k) {
        const std::size_t t = k * stride;
        const std::size_t t_prev = (k - 1) * stride;
        Tensor eps_hat;
        if (model.conditional()) {
            eps_hat = cfg_predict_embedded(model, x, t, cond_emb, config.cfg_scale);
        } else {
            std::vector<std::size_t> ts(batch, t);
            eps_hat = model.forward_plain(x, ts, nullptr);
        }
        x = ddim_step(x, eps_hat, sched.alpha_bar(t), sched.alpha_bar_or_one(t_prev), config.eta,
                      rng);
    }
    if (was_vector) return Tensor({x.size()}, x.vec());
    return x;
}

} // namespace

Tensor ddim_sample(const Denoiser& model, const NoiseSchedule& sched, const Tensor& initial_noise,
                   const SamplerConfig& config, const std::optional<std::vector<std::size_t>>& cond_ids,
                   Rng* rng) {
    CondView cond;
    if (cond_ids) cond.ids = &*cond_ids;
    return run_ddim(model, sched, initial_noise, config, cond, rng);
}

Tensor ddim_sample_embedded(const Denoiser& model, const NoiseSchedule& sched,
                            const Tensor& initial_noise, const SamplerConfig& config,
                            const Tensor& cond_emb, Rng* rng) {
    CondView cond;
    cond.emb = &cond_emb;
    return run_ddim(model, sched, initial_noise, config, cond, rng);
}

} // namespace invmm
