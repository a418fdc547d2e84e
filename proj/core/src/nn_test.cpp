#include "invmm/nn_test.hpp"

#include "invmm/csvio.hpp"
#include "invmm/errors.hpp"

namespace invmm {

CondSampling cond_sampling_from_string(const std::string& s) {
    if (s == "uniform") return CondSampling::uniform;
    if (s == "frequency") return CondSampling::frequency;
    throw ConfigError("unknown condition sampling '" + s + "' (want uniform or frequency)");
}

std::string to_string(CondSampling m) {
    return m == CondSampling::uniform ? "uniform" : "frequency";
}

NnTestResult nearest_neighbor_test(const Denoiser& model, const NoiseSchedule& sched,
                                   const ToyDataset& dataset, std::size_t n_samples,
                                   const ReplicationJudge& judge, const SamplerConfig& sampler,
                                   Rng& rng, CondSampling cond_mode, std::size_t batch) {
    if (n_samples < 1) throw ContractError("nearest_neighbor_test needs n_samples >= 1");
    if (batch < 1) batch = 1;
    dataset.validate();
    const std::size_t n = dataset.dim();
    if (n != model.config().data_dim) {
        throw ContractError("dataset dimensionality does not match the model");
    }

    // Frequency weighting: label occurrences over the duplication-expanded
    // training stream.
    std::vector<std::size_t> freq_pool;
    if (model.conditional() && cond_mode == CondSampling::frequency) {
        for (std::size_t id : dataset.training_rows()) freq_pool.push_back(dataset.labels[id]);
    }

    std::vector<Tensor> target_embs;
    target_embs.reserve(dataset.images.size());
    for (const auto& img : dataset.images) target_embs.push_back(judge.embed(img));

    NnTestResult result;
    result.n_samples = n_samples;
    result.hit_counts.assign(dataset.images.size(), 0);
    result.first_hit_sample.assign(dataset.images.size(), std::nullopt);

    std::size_t produced = 0;
    while (produced < n_samples) {
        const std::size_t b = std::min(batch, n_samples - produced);
        Tensor noise({b, n});
        for (std::size_t i = 0; i < noise.size(); ++i) noise[i] = rng.normal();
        Tensor generated;
        if (model.conditional()) {
            std::vector<std::size_t> ids(b);
            for (std::size_t i = 0; i < b; ++i) {
                if (cond_mode == CondSampling::frequency && !freq_pool.empty()) {
                    ids[i] = freq_pool[rng.uniform_int(0, freq_pool.size() - 1)];
                } else {
                    ids[i] = rng.uniform_int(0, dataset.num_classes - 1);
                }
            }
            generated = ddim_sample(model, sched, noise, sampler, ids, &rng);
        } else {
            generated = ddim_sample(model, sched, noise, sampler, std::nullopt, &rng);
        }
        for (std::size_t i = 0; i < b; ++i) {
            Tensor row({n}, std::vector<double>(generated.data() + i * n,
                                                generated.data() + (i + 1) * n));
            const Tensor emb = judge.embed(row);
            for (std::size_t id = 0; id < dataset.images.size(); ++id) {
                if (l2_distance(emb, target_embs[id]) <= judge.beta()) {
                    result.replicated_ids.insert(id);
                    if (!result.first_hit_sample[id]) result.first_hit_sample[id] = produced + i;
                    ++result.hit_counts[id];
                }
            }
        }
        produced += b;
    }
    return result;
}

std::string nn_result_csv(const NnTestResult& result) {
    std::string out = "image_id,hit_count,first_hit_sample_index\n";
    for (std::size_t id = 0; id < result.hit_counts.size(); ++id) {
        const auto& first = result.first_hit_sample[id];
        out += csv_line({std::to_string(id), std::to_string(result.hit_counts[id]),
                         first ? std::to_string(*first) : "-1"});
    }
    return out;
}

} // namespace invmm
