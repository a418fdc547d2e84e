#include "invmm/prompt.hpp"

#include <cmath>
#include <limits>

#include "invmm/csvio.hpp"
#include "invmm/errors.hpp"

namespace invmm {

Tensor PromptDistribution::probabilities() const {
    NoGradScope ng;
    return softmax_rows(logits).value();
}

std::vector<double> PromptDistribution::row_entropies() const {
    const Tensor p = probabilities();
    const std::size_t m = p.extent(0), v = p.extent(1);
    std::vector<double> out(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        double h = 0.0;
        for (std::size_t j = 0; j < v; ++j) {
            const double pij = p.at2(i, j);
            if (pij > 0.0) h -= pij * std::log(pij);
        }
        out[i] = h;
    }
    return out;
}

PromptDistribution init_prompt_dist(std::size_t positions, std::size_t vocab, double tau) {
    if (positions < 1 || vocab < 1) throw ConfigError("prompt distribution needs M, V >= 1");
    if (!(tau > 0.0)) throw ConfigError("temperature must be positive");
    PromptDistribution d;
    d.logits = Var::leaf(Tensor::zeros({positions, vocab}), true);
    d.tau = tau;
    return d;
}

SmoothedTokens gumbel_softmax_sample(const PromptDistribution& dist, Rng& rng) {
    const std::size_t m = dist.positions(), v = dist.vocab();
    Tensor g({m, v});
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = rng.gumbel();
    return gumbel_softmax_sample(dist, g);
}

SmoothedTokens gumbel_softmax_sample(const PromptDistribution& dist, const Tensor& gumbels) {
    if (!gumbels.same_shape(dist.logits.value())) {
        throw ContractError("gumbel perturbations must match the logits shape");
    }
    Var perturbed = mul(add(dist.logits, Var::constant(gumbels)), Var::scalar(1.0 / dist.tau));
    SmoothedTokens tokens;
    tokens.weights = softmax_rows(perturbed);
    tokens.one_hot = false;
    return tokens;
}

SmoothedTokens one_hot_tokens(const std::vector<std::size_t>& ids, std::size_t vocab) {
    Tensor w({ids.size(), vocab});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= vocab) throw ContractError("token id out of vocabulary");
        w.at2(i, ids[i]) = 1.0;
    }
    SmoothedTokens tokens;
    tokens.weights = Var::constant(std::move(w));
    tokens.one_hot = true;
    return tokens;
}

Var embed_smooth(const SmoothedTokens& tokens, const Var& embedding_table) {
    const Tensor& w = tokens.weights.value();
    const Tensor& e = embedding_table.value();
    if (e.rank() != 2 || w.rank() != 2 || w.extent(1) != e.extent(0)) {
        throw ContractError("embed_smooth: weights " + w.shape_str() +
                            " do not match embedding table " + e.shape_str());
    }
    return matmul(tokens.weights, embedding_table);
}

std::vector<std::size_t> discretize(const PromptDistribution& dist, Rng& rng) {
    const Tensor& logits = dist.logits.value();
    const std::size_t m = dist.positions(), v = dist.vocab();
    std::vector<std::size_t> ids(m, 0);
    for (std::size_t i = 0; i < m; ++i) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t arg = 0;
        for (std::size_t j = 0; j < v; ++j) {
            const double score = logits.at2(i, j) + rng.gumbel();
            if (score > best) { // strict: ties keep the lowest index
                best = score;
                arg = j;
            }
        }
        ids[i] = arg;
    }
    return ids;
}

Var condition_regularizer(const PromptDistribution& dist, const std::vector<double>& prior) {
    const std::size_t v = dist.vocab();
    if (prior.size() != v) throw ContractError("prior size must equal the vocabulary size");
    Tensor log_prior({1, v});
    for (std::size_t j = 0; j < v; ++j) {
        if (!(prior[j] > 0.0)) {
            throw MathDomainError("condition prior must be strictly positive everywhere");
        }
        log_prior[j] = std::log(prior[j]);
    }
    const std::size_t m = dist.positions();
    Var p = softmax_rows(dist.logits);
    Var diff = sub(log(p), tile_rows(Var::constant(std::move(log_prior)), m));
    // sum over categories, averaged over positions
    return mul(sum(mul(p, diff)), Var::scalar(1.0 / static_cast<double>(m)));
}

void PromptInvConfig::validate(const Denoiser& model) const {
    if (!model.conditional()) throw ConfigError("joint inversion needs a conditional model");
    if (positions < 1) throw ConfigError("prompt positions must be >= 1");
    if (!(tau > 0.0)) throw ConfigError("temperature must be positive");
    if (cr_weight < 0.0) throw ConfigError("cr_weight must be >= 0");
    if (cfg_scales.empty()) throw ConfigError("cfg_scales must not be empty");
    if (positions != model.config().cond_slots) {
        throw ConfigError("prompt positions must equal the model's condition slots");
    }
    if (!prior.empty() && prior.size() != model.config().vocab_size) {
        throw ConfigError("prior size must equal the vocabulary size");
    }
}

JointInversionResult joint_invert(const Denoiser& model, const NoiseSchedule& sched,
                                  const Tensor& x0, const InversionConfig& inv_config,
                                  const PromptInvConfig& prompt_config,
                                  const ReplicationJudge& judge) {
    prompt_config.validate(model);
    const std::size_t vocab = model.config().vocab_size;
    PromptDistribution prompt =
        init_prompt_dist(prompt_config.positions, vocab, prompt_config.tau);

    const std::size_t emb_dim = model.config().cond_input_dim();
    auto draw_batch = [&model, &prompt, emb_dim](std::size_t count, Rng& rng) {
        Var rows;
        for (std::size_t i = 0; i < count; ++i) {
            SmoothedTokens tokens = gumbel_softmax_sample(prompt, rng);
            Var emb = reshape(embed_smooth(tokens, model.embedding_table()), {1, emb_dim});
            rows = rows.defined() ? concat_rows(rows, emb) : emb;
        }
        return rows;
    };

    CondSource src;
    src.draws = draw_batch;
    src.draws_plain = [&draw_batch](std::size_t count, Rng& rng) {
        NoGradScope ng;
        return draw_batch(count, rng).value();
    };
    src.cfg_scales = prompt_config.cfg_scales;

    InversionHooks hooks;
    hooks.cond = &src;
    hooks.extra_params.push_back({"prompt_logits", prompt.logits});
    if (prompt_config.cr_weight > 0.0) {
        std::vector<double> prior = prompt_config.prior;
        if (prior.empty()) prior.assign(vocab, 1.0 / static_cast<double>(vocab));
        hooks.extra_loss = [&prompt, prior, w = prompt_config.cr_weight]() {
            return mul(condition_regularizer(prompt, prior), Var::scalar(w));
        };
    }

    JointInversionResult out{
        invert_core(model, sched, x0, inv_config, judge, hooks, std::nullopt), std::move(prompt)};
    return out;
}

std::string prompt_dist_csv(const PromptDistribution& dist) {
    const Tensor p = dist.probabilities();
    const std::vector<double> ent = dist.row_entropies();
    const std::size_t m = p.extent(0), v = p.extent(1);
    std::string header = "position";
    for (std::size_t j = 0; j < v; ++j) header += ",p" + std::to_string(j);
    header += ",entropy\n";
    std::string body;
    for (std::size_t i = 0; i < m; ++i) {
        std::vector<std::string> cells{std::to_string(i)};
        for (std::size_t j = 0; j < v; ++j) cells.push_back(format_double(p.at2(i, j)));
        cells.push_back(format_double(ent[i]));
        body += csv_line(cells);
    }
    return header + body;
}

} // namespace invmm
