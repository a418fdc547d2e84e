#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "invmm/graph.hpp"
#include "invmm/schedule.hpp"

namespace invmm {

enum class Activation { silu, tanh };

Activation activation_from_string(const std::string& s);
std::string to_string(Activation a);

struct DenoiserConfig {
    std::size_t data_dim = 0;     // N (flattened image)
    std::size_t hidden_dim = 64;
    std::size_t hidden_layers = 3;
    std::size_t time_embed_dim = 16; // even
    std::size_t cond_embed_dim = 0;  // per-slot width; 0 = unconditional
    std::size_t vocab_size = 0;      // class ids + null id; >= 2 when conditional
    std::size_t cond_slots = 1;      // condition positions consumed by the model
    Activation activation = Activation::silu;

    bool conditional() const { return cond_embed_dim > 0 && vocab_size >= 2; }
    std::size_t cond_input_dim() const { return conditional() ? cond_slots * cond_embed_dim : 0; }
    std::size_t input_dim() const { return data_dim + time_embed_dim + cond_input_dim(); }
    void validate() const;
};

/// Noise-prediction MLP: eps_hat = f(x_t, t[, c]). Input is the noisy data
/// concatenated with a sinusoidal timestep embedding and, when conditional,
/// a condition embedding; output has data dimensionality.
class Denoiser {
public:
    Denoiser(DenoiserConfig cfg, std::uint64_t init_seed);
    /// Rebuild from flattened weights in canonical parameter order.
    Denoiser(DenoiserConfig cfg, const std::vector<double>& flat_weights);

    const DenoiserConfig& config() const { return cfg_; }
    bool conditional() const { return cfg_.conditional(); }
    std::size_t null_id() const { return cfg_.vocab_size - 1; }

    /// Batched prediction. x_t: [B, N]; ts: one timestep per row; cond_emb
    /// (when the model is conditional): [B, cond_input_dim].
    Var forward(const Var& x_t, std::span<const std::size_t> ts, const Var* cond_emb = nullptr) const;

    /// Plain no-graph prediction for samplers.
    Tensor forward_plain(const Tensor& x_t, std::span<const std::size_t> ts,
                         const Tensor* cond_emb = nullptr) const;

    /// Condition embeddings for discrete ids (one slot), one row per id.
    /// Differentiable into the embedding table while the model is trainable.
    Var embed_ids(std::span<const std::size_t> ids) const;
    Tensor embed_ids_plain(std::span<const std::size_t> ids) const;

    Tensor time_embedding(std::size_t t) const;

    const Var& embedding_table() const;

    std::vector<std::pair<std::string, Var>>& params() { return params_; }
    const std::vector<std::pair<std::string, Var>>& params() const { return params_; }
    std::vector<double> flat_weights() const;
    std::size_t weight_count() const;

    /// Drop gradient tracking from all parameters. A trained model is
    /// frozen before it is shared by inversion jobs.
    void freeze();
    /// Re-enable gradient tracking (resuming training from a checkpoint).
    void unfreeze();

private:
    void build_params(std::uint64_t init_seed);
    void rebind_params(bool trainable);
    DenoiserConfig cfg_;
    std::vector<std::pair<std::string, Var>> params_;
    std::vector<Var> layer_w_, layer_b_; // includes output layer as last
    Var cond_table_;
};

/// x_t = sqrt(alpha_bar) * x0 + sqrt(1 - alpha_bar) * eps.
Tensor forward_diffuse(const Tensor& x0, const Tensor& eps, double alpha_bar);
Var forward_diffuse(const Var& x0, const Var& eps, double alpha_bar);
/// Contract form with timestep bounds checking (1 <= t <= T).
Tensor forward_diffuse(const Tensor& x0, std::size_t t, const Tensor& eps,
                       const NoiseSchedule& schedule);

/// Element-mean squared error ||eps - eps_hat||^2 at per-row timesteps.
/// x0/eps: [B, N]. Differentiable w.r.t. model params, eps, and cond_emb.
Var eps_loss(const Denoiser& model, const NoiseSchedule& sched, const Var& x0, const Var& eps,
             std::span<const std::size_t> ts, const Var* cond_emb = nullptr);
/// Single-timestep convenience (all rows at t).
Var eps_loss_at(const Denoiser& model, const NoiseSchedule& sched, const Var& x0, const Var& eps,
                std::size_t t, const Var* cond_emb = nullptr);
/// Clean-data prediction error: ((1 - alpha_bar)/alpha_bar) * eps_loss at
/// the same (x_t, t). Upweights late diffusion timesteps.
Var x0_loss(const Denoiser& model, const NoiseSchedule& sched, const Var& x0, const Var& eps,
            std::size_t t, const Var* cond_emb = nullptr);

/// Guided prediction: eps(null) + scale * (eps(c) - eps(null)).
/// x_t: [B, N], all rows at timestep t and condition id `cond`.
Tensor cfg_predict(const Denoiser& model, const Tensor& x_t, std::size_t t, std::size_t cond,
                   double cfg_scale);
/// Guided prediction with a precomputed condition embedding [B, E].
Tensor cfg_predict_embedded(const Denoiser& model, const Tensor& x_t, std::size_t t,
                            const Tensor& cond_emb, double cfg_scale);

} // namespace invmm
