#include "invmm/denoiser.hpp"

#include <cmath>

#include "invmm/errors.hpp"
#include "invmm/rng.hpp"

namespace invmm {

Activation activation_from_string(const std::string& s) {
    if (s == "silu") return Activation::silu;
    if (s == "tanh") return Activation::tanh;
    throw ConfigError("unknown activation '" + s + "' (want silu or tanh)");
}

std::string to_string(Activation a) { return a == Activation::silu ? "silu" : "tanh"; }

void DenoiserConfig::validate() const {
    if (data_dim == 0) throw ConfigError("data_dim must be positive");
    if (hidden_dim == 0 || hidden_layers == 0) throw ConfigError("hidden dims must be positive");
    if (time_embed_dim == 0 || time_embed_dim % 2 != 0) {
        throw ConfigError("time_embed_dim must be positive and even");
    }
    if (cond_embed_dim > 0 && vocab_size < 2) {
        throw ConfigError("conditional model needs vocab_size >= 2 (classes + null id)");
    }
    if (cond_embed_dim > 0 && cond_slots == 0) throw ConfigError("cond_slots must be positive");
}

Denoiser::Denoiser(DenoiserConfig cfg, std::uint64_t init_seed) : cfg_(cfg) {
    cfg_.validate();
    build_params(init_seed);
}

void Denoiser::build_params(std::uint64_t init_seed) {
    Rng rng(Rng::derive(init_seed, 0xD30153ULL));
    auto init_matrix = [&](std::size_t in, std::size_t out) {
        Tensor w({in, out});
        const double s = 1.0 / std::sqrt(static_cast<double>(in));
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = s * rng.normal();
        return w;
    };
    std::size_t in = cfg_.input_dim();
    for (std::size_t l = 0; l < cfg_.hidden_layers; ++l) {
        Var w = Var::leaf(init_matrix(in, cfg_.hidden_dim), true);
        Var b = Var::leaf(Tensor::zeros({cfg_.hidden_dim}), true);
        params_.push_back({"layer" + std::to_string(l) + ".w", w});
        params_.push_back({"layer" + std::to_string(l) + ".b", b});
        layer_w_.push_back(w);
        layer_b_.push_back(b);
        in = cfg_.hidden_dim;
    }
    Var wo = Var::leaf(init_matrix(in, cfg_.data_dim), true);
    Var bo = Var::leaf(Tensor::zeros({cfg_.data_dim}), true);
    params_.push_back({"out.w", wo});
    params_.push_back({"out.b", bo});
    layer_w_.push_back(wo);
    layer_b_.push_back(bo);
    if (cfg_.conditional()) {
        Tensor table({cfg_.vocab_size, cfg_.cond_embed_dim});
        const double s = 1.0 / std::sqrt(static_cast<double>(cfg_.cond_embed_dim));
        for (std::size_t i = 0; i < table.size(); ++i) table[i] = s * rng.normal();
        cond_table_ = Var::leaf(std::move(table), true);
        params_.push_back({"cond_table", cond_table_});
    }
}

Denoiser::Denoiser(DenoiserConfig cfg, const std::vector<double>& flat_weights) : Denoiser(cfg, 0) {
    if (flat_weights.size() != weight_count()) {
        throw IoError("weight count mismatch: got " + std::to_string(flat_weights.size()) +
                      ", model needs " + std::to_string(weight_count()));
    }
    std::size_t off = 0;
    for (auto& [name, p] : params_) {
        Tensor t(p.value().shape());
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = flat_weights[off + i];
        off += t.size();
        p.set_value(std::move(t));
    }
    freeze();
}

std::size_t Denoiser::weight_count() const {
    std::size_t n = 0;
    for (const auto& [name, p] : params_) n += p.value().size();
    return n;
}

std::vector<double> Denoiser::flat_weights() const {
    std::vector<double> out;
    out.reserve(weight_count());
    for (const auto& [name, p] : params_) {
        const Tensor& t = p.value();
        out.insert(out.end(), t.data(), t.data() + t.size());
    }
    return out;
}

void Denoiser::freeze() { rebind_params(false); }

void Denoiser::unfreeze() { rebind_params(true); }

void Denoiser::rebind_params(bool trainable) {
    // Rebind every parameter as a fresh leaf holding the same value.
    for (auto& [name, p] : params_) p = Var::leaf(p.value(), trainable);
    for (std::size_t l = 0; l < layer_w_.size(); ++l) {
        layer_w_[l] = params_[2 * l].second;
        layer_b_[l] = params_[2 * l + 1].second;
    }
    if (cfg_.conditional()) cond_table_ = params_.back().second;
}

Tensor Denoiser::time_embedding(std::size_t t) const {
    const std::size_t d = cfg_.time_embed_dim;
    const std::size_t half = d / 2;
    Tensor emb({d});
    for (std::size_t i = 0; i < half; ++i) {
        const double freq =
            std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
        const double a = static_cast<double>(t) * freq;
        emb[2 * i] = std::sin(a);
        emb[2 * i + 1] = std::cos(a);
    }
    return emb;
}

const Var& Denoiser::embedding_table() const {
    if (!cfg_.conditional()) throw ContractError("unconditional model has no embedding table");
    return cond_table_;
}

Var Denoiser::embed_ids(std::span<const std::size_t> ids) const {
    if (!cfg_.conditional()) throw ContractError("unconditional model cannot embed condition ids");
    Tensor onehot({ids.size(), cfg_.vocab_size});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= cfg_.vocab_size) throw ContractError("condition id out of vocabulary");
        onehot.at2(i, ids[i]) = 1.0;
    }
    return matmul(Var::constant(std::move(onehot)), cond_table_);
}

Tensor Denoiser::embed_ids_plain(std::span<const std::size_t> ids) const {
    NoGradScope ng;
    return embed_ids(ids).value();
}

Var Denoiser::forward(const Var& x_t, std::span<const std::size_t> ts, const Var* cond_emb) const {
    const Tensor& x = x_t.value();
    if (x.rank() != 2 || x.extent(1) != cfg_.data_dim) {
        throw ContractError("forward expects x_t of shape [B," + std::to_string(cfg_.data_dim) +
                            "], got " + x.shape_str());
    }
    const std::size_t batch = x.extent(0);
    if (ts.size() != batch) throw ContractError("forward: one timestep per row required");
    if (cfg_.conditional() != (cond_emb != nullptr)) {
        throw ContractError(cfg_.conditional() ? "conditional model needs a condition embedding"
                                               : "unconditional model got a condition embedding");
    }

    Tensor temb({batch, cfg_.time_embed_dim});
    for (std::size_t i = 0; i < batch; ++i) {
        const Tensor e = time_embedding(ts[i]);
        std::copy(e.data(), e.data() + e.size(), temb.data() + i * cfg_.time_embed_dim);
    }
    Var h = concat_cols(x_t, Var::constant(std::move(temb)));
    if (cond_emb) {
        const Tensor& c = cond_emb->value();
        if (c.rank() != 2 || c.extent(0) != batch || c.extent(1) != cfg_.cond_input_dim()) {
            throw ContractError("condition embedding must be [B," +
                                std::to_string(cfg_.cond_input_dim()) + "], got " + c.shape_str());
        }
        h = concat_cols(h, *cond_emb);
    }
    const std::size_t layers = layer_w_.size();
    for (std::size_t l = 0; l + 1 < layers; ++l) {
        h = add(matmul(h, layer_w_[l]), tile_rows(layer_b_[l], batch));
        h = cfg_.activation == Activation::silu ? silu(h) : tanh(h);
    }
    return add(matmul(h, layer_w_.back()), tile_rows(layer_b_.back(), batch));
}

Tensor Denoiser::forward_plain(const Tensor& x_t, std::span<const std::size_t> ts,
                               const Tensor* cond_emb) const {
    NoGradScope ng;
    if (cond_emb) {
        Var c = Var::constant(*cond_emb);
        return forward(Var::constant(x_t), ts, &c).value();
    }
    return forward(Var::constant(x_t), ts, nullptr).value();
}

// ---------------------------------------------------------------------------

Tensor forward_diffuse(const Tensor& x0, const Tensor& eps, double alpha_bar) {
    if (!x0.same_shape(eps)) {
        throw ContractError("forward_diffuse: x0/eps shape mismatch: " + x0.shape_str() + " vs " +
                            eps.shape_str());
    }
    return add(scale(x0, std::sqrt(alpha_bar)), scale(eps, std::sqrt(1.0 - alpha_bar)));
}

Var forward_diffuse(const Var& x0, const Var& eps, double alpha_bar) {
    if (!x0.value().same_shape(eps.value())) {
        throw ContractError("forward_diffuse: x0/eps shape mismatch");
    }
    return add(x0 * std::sqrt(alpha_bar), eps * std::sqrt(1.0 - alpha_bar));
}

Tensor forward_diffuse(const Tensor& x0, std::size_t t, const Tensor& eps,
                       const NoiseSchedule& schedule) {
    return forward_diffuse(x0, eps, schedule.alpha_bar(t));
}

namespace {

Var diffuse_rows(const Var& x0, const Var& eps, std::span<const std::size_t> ts,
                 const NoiseSchedule& sched) {
    const std::size_t batch = x0.value().extent(0);
    const std::size_t n = x0.value().extent(1);
    Tensor a({batch, n});
    Tensor b({batch, n});
    for (std::size_t i = 0; i < batch; ++i) {
        const double ab = sched.alpha_bar(ts[i]);
        const double sa = std::sqrt(ab);
        const double sb = std::sqrt(1.0 - ab);
        for (std::size_t j = 0; j < n; ++j) {
            a.at2(i, j) = sa;
            b.at2(i, j) = sb;
        }
    }
    return add(mul(x0, Var::constant(std::move(a))), mul(eps, Var::constant(std::move(b))));
}

} // namespace

Var eps_loss(const Denoiser& model, const NoiseSchedule& sched, const Var& x0, const Var& eps,
             std::span<const std::size_t> ts, const Var* cond_emb) {
    if (!x0.value().same_shape(eps.value())) {
        throw ContractError("eps_loss: x0/eps shape mismatch");
    }
    Var x_t = diffuse_rows(x0, eps, ts, sched);
    Var pred = model.forward(x_t, ts, cond_emb);
    return mean(square(sub(eps, pred)));
}

Var eps_loss_at(const Denoiser& model, const NoiseSchedule& sched, const Var& x0, const Var& eps,
                std::size_t t, const Var* cond_emb) {
    std::vector<std::size_t> ts(x0.value().extent(0), t);
    return eps_loss(model, sched, x0, eps, ts, cond_emb);
}

Var x0_loss(const Denoiser& model, const NoiseSchedule& sched, const Var& x0, const Var& eps,
            std::size_t t, const Var* cond_emb) {
    const double ab = sched.alpha_bar(t);
    if (ab <= 0.0) throw MathDomainError("x0_loss: alpha_bar must be positive");
    const double weight = (1.0 - ab) / ab;
    return mul(eps_loss_at(model, sched, x0, eps, t, cond_emb), Var::scalar(weight));
}

Tensor cfg_predict_embedded(const Denoiser& model, const Tensor& x_t, std::size_t t,
                            const Tensor& cond_emb, double cfg_scale) {
    if (!model.conditional()) throw ContractError("cfg_predict needs a conditional model");
    if (cfg_scale < 0.0) throw ContractError("cfg_scale must be >= 0");
    const std::size_t batch = x_t.rank() == 2 ? x_t.extent(0) : 1;
    Tensor x = x_t.rank() == 2 ? x_t : Tensor({1, x_t.size()}, x_t.vec());
    std::vector<std::size_t> ts(batch, t);

    std::vector<std::size_t> nulls(batch, model.null_id());
    const Tensor null_emb = model.embed_ids_plain(nulls);
    const Tensor uncond = model.forward_plain(x, ts, &null_emb);
    if (cfg_scale == 0.0) return uncond;
    const Tensor cond = model.forward_plain(x, ts, &cond_emb);
    // uncond + s * (cond - uncond)
    return add(uncond, scale(sub(cond, uncond), cfg_scale));
}

Tensor cfg_predict(const Denoiser& model, const Tensor& x_t, std::size_t t, std::size_t cond,
                   double cfg_scale) {
    if (!model.conditional()) throw ContractError("cfg_predict needs a conditional model");
    const std::size_t batch = x_t.rank() == 2 ? x_t.extent(0) : 1;
    std::vector<std::size_t> ids(batch, cond);
    return cfg_predict_embedded(model, x_t, t, model.embed_ids_plain(ids), cfg_scale);
}

} // namespace invmm
