#include "invmm/train.hpp"

#include <cmath>

#include "invmm/errors.hpp"
#include "invmm/optim.hpp"
#include "invmm/rng.hpp"

namespace invmm {

void TrainConfig::validate() const {
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
    if (conditional && !(cond_drop_prob >= 0.0 && cond_drop_prob < 1.0)) {
        throw ConfigError("cond_drop_prob must lie in [0, 1)");
    }
    if (!(ema_decay >= 0.0 && ema_decay < 1.0)) throw ConfigError("ema_decay must lie in [0, 1)");
}

Denoiser train_denoiser(const ToyDataset& data, const NoiseSchedule& sched,
                        const DenoiserConfig& model_cfg, const TrainConfig& cfg,
                        TrainReport* report) {
    if (cfg.conditional && !model_cfg.conditional()) {
        throw ConfigError("conditional training needs a conditional model config");
    }
    if (model_cfg.data_dim != data.dim()) {
        throw ConfigError("model data_dim does not match dataset dimensionality");
    }
    Denoiser model(model_cfg, cfg.seed);
    train_denoiser_inplace(model, data, sched, cfg, report);
    model.freeze();
    return model;
}

void train_denoiser_inplace(Denoiser& model, const ToyDataset& data, const NoiseSchedule& sched,
                            const TrainConfig& cfg, TrainReport* report) {
    data.validate();
    cfg.validate();
    if (cfg.conditional && !model.conditional()) {
        throw ConfigError("conditional training needs a conditional model");
    }
    if (cfg.conditional && data.labels.empty()) {
        throw ConfigError("conditional training needs a labeled dataset");
    }
    if (model.config().data_dim != data.dim()) {
        throw ConfigError("model data_dim does not match dataset dimensionality");
    }

    Adam opt(AdamConfig{.lr = cfg.lr});
    for (auto& [name, p] : model.params()) opt.add_param(name, p);

    Rng rng(Rng::derive(cfg.seed, 0x7EA1ULL));
    std::vector<std::size_t> rows = data.training_rows();
    const std::size_t n = data.dim();

    double ema = 0.0;
    bool ema_init = false;
    std::size_t step = 0;
    TrainReport local;
    TrainReport& rep = report ? *report : local;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(rows);
        for (std::size_t start = 0; start < rows.size(); start += cfg.batch_size) {
            const std::size_t b = std::min(cfg.batch_size, rows.size() - start);
            Tensor x0({b, n});
            Tensor eps({b, n});
            std::vector<std::size_t> ts(b);
            std::vector<std::size_t> conds(b);
            for (std::size_t i = 0; i < b; ++i) {
                const std::size_t id = rows[start + i];
                const Tensor& img = data.images[id];
                std::copy(img.data(), img.data() + n, x0.data() + i * n);
                for (std::size_t j = 0; j < n; ++j) eps.at2(i, j) = rng.normal();
                ts[i] = rng.uniform_int(1, sched.steps());
                if (cfg.conditional) {
                    const bool drop = rng.uniform() < cfg.cond_drop_prob;
                    conds[i] = drop ? model.null_id() : data.labels[id];
                }
            }
            Var loss;
            if (cfg.conditional) {
                Var cond_emb = model.embed_ids(conds);
                loss = eps_loss(model, sched, Var::constant(x0), Var::constant(eps), ts, &cond_emb);
            } else {
                loss = eps_loss(model, sched, Var::constant(x0), Var::constant(eps), ts, nullptr);
            }
            const double lval = loss.value().item();
            if (!std::isfinite(lval)) {
                throw TrainingError("training loss non-finite at step " + std::to_string(step));
            }
            opt.step(backward(loss));
            ++step;
            ema = ema_init ? cfg.ema_decay * ema + (1.0 - cfg.ema_decay) * lval : lval;
            ema_init = true;
        }
        rep.epoch_ema_loss.push_back(ema);
    }
    rep.final_ema = ema;
    rep.steps = step;
}

} // namespace invmm
