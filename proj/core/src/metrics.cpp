#include "invmm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "invmm/errors.hpp"
#include "invmm/rng.hpp"

namespace invmm {

void ScoredSet::validate() const {
    std::set<std::size_t> ids;
    std::size_t pos = 0, neg = 0;
    for (const auto& e : entries) {
        if (!ids.insert(e.id).second) throw MetricError("duplicate id in scored set");
        (e.positive ? pos : neg) += 1;
    }
    if (pos == 0 || neg == 0) {
        throw MetricError("ranking metrics need at least one positive and one negative");
    }
}

namespace {

// Key where larger = more positive. With lower_is_positive, +inf scores map
// to -inf keys and thus rank last.
double rank_key(double score, ScoreOrientation o) {
    return o == ScoreOrientation::higher_is_positive ? score : -score;
}

} // namespace

double auc(const ScoredSet& scored, ScoreOrientation orientation) {
    scored.validate();
    std::vector<std::pair<double, bool>> keyed;
    keyed.reserve(scored.entries.size());
    std::size_t pos = 0, neg = 0;
    for (const auto& e : scored.entries) {
        keyed.push_back({rank_key(e.score, orientation), e.positive});
        (e.positive ? pos : neg) += 1;
    }
    std::sort(keyed.begin(), keyed.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    // Midranks over tie groups; AUC = (R_pos - P(P+1)/2) / (P*N).
    double pos_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < keyed.size()) {
        std::size_t j = i;
        while (j < keyed.size() && keyed[j].first == keyed[i].first) ++j;
        const double midrank = 0.5 * static_cast<double>(i + 1 + j); // average of ranks i+1..j
        for (std::size_t k = i; k < j; ++k) {
            if (keyed[k].second) pos_rank_sum += midrank;
        }
        i = j;
    }
    const double p = static_cast<double>(pos), n = static_cast<double>(neg);
    return (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

double tpr_at_fpr(const ScoredSet& scored, double fpr_budget, ScoreOrientation orientation) {
    scored.validate();
    if (!(fpr_budget > 0.0 && fpr_budget <= 1.0)) {
        throw MetricError("fpr budget must lie in (0, 1]");
    }
    std::vector<std::pair<double, bool>> keyed;
    std::size_t pos = 0, neg = 0;
    for (const auto& e : scored.entries) {
        keyed.push_back({rank_key(e.score, orientation), e.positive});
        (e.positive ? pos : neg) += 1;
    }
    // Predict positive iff key >= threshold; sweep observed keys descending.
    std::sort(keyed.begin(), keyed.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });
    double best = 0.0;
    std::size_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < keyed.size()) {
        std::size_t j = i;
        while (j < keyed.size() && keyed[j].first == keyed[i].first) ++j;
        for (std::size_t k = i; k < j; ++k) {
            (keyed[k].second ? tp : fp) += 1;
        }
        const double fpr = static_cast<double>(fp) / static_cast<double>(neg);
        const double tpr = static_cast<double>(tp) / static_cast<double>(pos);
        if (fpr <= fpr_budget) best = std::max(best, tpr);
        i = j;
    }
    return best;
}

std::optional<double> iou_collation(const std::vector<std::pair<std::size_t, double>>& scores,
                                    const std::set<std::size_t>& s_nn) {
    if (s_nn.empty()) return std::nullopt;
    std::vector<std::pair<std::size_t, double>> sorted = scores;
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second < b.second;
        return a.first < b.first; // cutoff ties resolved by ascending id
    });
    const std::size_t k = std::min(s_nn.size(), sorted.size());
    std::set<std::size_t> s_inv;
    for (std::size_t i = 0; i < k; ++i) s_inv.insert(sorted[i].first);
    std::size_t inter = 0;
    for (std::size_t id : s_inv) inter += s_nn.count(id);
    const std::size_t uni = s_inv.size() + s_nn.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<double> loss_mi_baseline(const Denoiser& model, const NoiseSchedule& sched,
                                     const std::vector<Tensor>& images,
                                     const LossBaselineConfig& config,
                                     std::optional<std::vector<std::size_t>> cond_ids) {
    if (config.noise_count < 1 || config.timestep_count < 1) {
        throw ConfigError("loss baseline needs noise_count, timestep_count >= 1");
    }
    if (cond_ids && cond_ids->size() != images.size()) {
        throw ContractError("one condition id per image required");
    }
    if (model.conditional() != cond_ids.has_value()) {
        throw ContractError(model.conditional() ? "conditional model needs condition ids"
                                                : "unconditional model cannot take condition ids");
    }
    NoGradScope ng;
    std::vector<double> out;
    out.reserve(images.size());
    for (std::size_t idx = 0; idx < images.size(); ++idx) {
        const Tensor& img = images[idx];
        Rng rng(Rng::derive(config.seed, idx));
        const std::size_t b = config.noise_count;
        Tensor x0_rows({b, img.size()});
        for (std::size_t i = 0; i < b; ++i) {
            std::copy(img.data(), img.data() + img.size(), x0_rows.data() + i * img.size());
        }
        Var x0v = Var::constant(x0_rows);
        Tensor eps = rng.normal_tensor({b, img.size()});
        Var epsv = Var::constant(eps);

        Var cond;
        const Var* cond_ptr = nullptr;
        if (cond_ids) {
            std::vector<std::size_t> ids(b, (*cond_ids)[idx]);
            cond = model.embed_ids(ids);
            cond_ptr = &cond;
        }
        double acc = 0.0;
        for (std::size_t s = 0; s < config.timestep_count; ++s) {
            const std::size_t t = rng.uniform_int(1, sched.steps());
            Var term = config.mode == LossMode::x0
                           ? x0_loss(model, sched, x0v, epsv, t, cond_ptr)
                           : eps_loss_at(model, sched, x0v, epsv, t, cond_ptr);
            acc += term.value().item();
        }
        out.push_back(acc / static_cast<double>(config.timestep_count));
    }
    return out;
}

} // namespace invmm
