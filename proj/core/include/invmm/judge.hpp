#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "invmm/dataset.hpp"
#include "invmm/tensor.hpp"

namespace invmm {

enum class EmbedMode { raw, random_projection };

EmbedMode embed_mode_from_string(const std::string& s);
std::string to_string(EmbedMode m);

struct JudgeConfig {
    EmbedMode mode = EmbedMode::raw;
    std::size_t proj_dim = 32;
    std::uint64_t proj_seed = 17;
    double beta = 0.0; // replication threshold; must be > 0 to build a judge
};

/// Replication decision d(embed(a), embed(b)) <= beta with deterministic
/// embeddings: flatten, optional fixed-seed Gaussian projection, unit-L2
/// normalization, Euclidean distance. Immutable once constructed.
class ReplicationJudge {
public:
    explicit ReplicationJudge(JudgeConfig config);

    Tensor embed(const Tensor& x) const; // zero input -> CalibrationError
    double distance(const Tensor& a, const Tensor& b) const;
    bool is_replication(const Tensor& generated, const Tensor& target) const;
    double beta() const { return config_.beta; }
    const JudgeConfig& config() const { return config_; }

private:
    JudgeConfig config_;
    mutable Tensor proj_; // lazily sized on first embed; seed-determined
    mutable std::size_t proj_input_dim_ = 0;
};

struct CalibrationResult {
    double beta = 0.0;
    /// Set when the calibrated beta covers antipodal pairs, i.e. the
    /// threshold would accept everything on the unit sphere.
    bool degenerate = false;
    std::size_t pair_count = 0;
};

/// beta = the given percentile of pairwise inter-image embedding distances
/// over the dataset's unique images. Exact-duplicate pairs (distance ~ 0)
/// are excluded from the pool. Throws CalibrationError if every image is
/// identical.
CalibrationResult calibrate_beta(const ToyDataset& dataset, const JudgeConfig& config,
                                 double percentile = 5.0);

} // namespace invmm
