#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "invmm/denoiser.hpp"
#include "invmm/schedule.hpp"

namespace invmm {

struct TrainingManifest {
    std::string dataset_hash;
    std::size_t epochs = 0;
    std::map<std::size_t, std::size_t> duplication;
    std::uint64_t seed = 0;
};

/// Versioned JSON container: schedule alphas, architecture dims, flattened
/// 64-bit weights, RNG seed, training manifest. Doubles are serialized in
/// shortest round-trip form, so save -> load -> save is byte-identical.
void save_checkpoint(const std::filesystem::path& path, const Denoiser& model,
                     const NoiseSchedule& sched, const TrainingManifest& manifest);

struct LoadedCheckpoint {
    Denoiser model;
    NoiseSchedule schedule;
    TrainingManifest manifest;
};

/// Throws IoError naming the offending field on a corrupt container.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

} // namespace invmm
