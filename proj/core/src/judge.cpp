#include "invmm/judge.hpp"

#include <algorithm>
#include <cmath>

#include "invmm/errors.hpp"
#include "invmm/rng.hpp"

namespace invmm {

EmbedMode embed_mode_from_string(const std::string& s) {
    if (s == "raw") return EmbedMode::raw;
    if (s == "random_projection") return EmbedMode::random_projection;
    throw ConfigError("unknown embed mode '" + s + "' (want raw or random_projection)");
}

std::string to_string(EmbedMode m) {
    return m == EmbedMode::raw ? "raw" : "random_projection";
}

ReplicationJudge::ReplicationJudge(JudgeConfig config) : config_(config) {
    if (!(config_.beta > 0.0)) throw ConfigError("judge beta must be > 0");
    if (config_.mode == EmbedMode::random_projection && config_.proj_dim == 0) {
        throw ConfigError("projection dimension must be positive");
    }
}

namespace {

Tensor embed_impl(const Tensor& x, const JudgeConfig& cfg, Tensor& proj, std::size_t& proj_in) {
    Tensor flat({x.size()}, x.vec());
    if (cfg.mode == EmbedMode::random_projection) {
        if (proj_in != flat.size()) {
            Rng rng(cfg.proj_seed);
            proj = rng.normal_tensor({flat.size(), cfg.proj_dim});
            proj_in = flat.size();
        }
        flat = matmul(Tensor({1, flat.size()}, flat.vec()), proj);
        flat = Tensor({flat.size()}, flat.vec());
    }
    const double norm = l2_norm(flat);
    if (norm == 0.0) throw CalibrationError("cannot embed a zero vector");
    return scale(flat, 1.0 / norm);
}

} // namespace

Tensor ReplicationJudge::embed(const Tensor& x) const {
    return embed_impl(x, config_, proj_, proj_input_dim_);
}

double ReplicationJudge::distance(const Tensor& a, const Tensor& b) const {
    return l2_distance(embed(a), embed(b));
}

bool ReplicationJudge::is_replication(const Tensor& generated, const Tensor& target) const {
    if (generated.size() != target.size()) {
        throw ContractError("is_replication: image sizes differ");
    }
    return distance(generated, target) <= config_.beta;
}

CalibrationResult calibrate_beta(const ToyDataset& dataset, const JudgeConfig& config,
                                 double percentile) {
    if (dataset.images.size() < 2) throw CalibrationError("calibration needs >= 2 images");
    if (!(percentile > 0.0 && percentile <= 100.0)) {
        throw ConfigError("percentile must lie in (0, 100]");
    }
    Tensor proj;
    std::size_t proj_in = 0;
    std::vector<Tensor> embs;
    embs.reserve(dataset.images.size());
    for (const auto& img : dataset.images) {
        embs.push_back(embed_impl(img, config, proj, proj_in));
    }
    std::vector<double> dists;
    for (std::size_t i = 0; i < embs.size(); ++i) {
        for (std::size_t j = i + 1; j < embs.size(); ++j) {
            const double d = l2_distance(embs[i], embs[j]);
            if (d > 1e-12) dists.push_back(d); // exact duplicates excluded
        }
    }
    if (dists.empty()) throw CalibrationError("all images identical; cannot calibrate beta");
    std::sort(dists.begin(), dists.end());
    // Nearest-rank percentile.
    const double rank = percentile / 100.0 * static_cast<double>(dists.size());
    std::size_t idx = rank <= 1.0 ? 0 : static_cast<std::size_t>(std::ceil(rank)) - 1;
    idx = std::min(idx, dists.size() - 1);
    CalibrationResult res;
    res.beta = dists[idx];
    res.degenerate = res.beta >= 2.0 * (1.0 - 1e-9);
    res.pair_count = dists.size();
    return res;
}

} // namespace invmm
