#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "invmm/dataset.hpp"
#include "invmm/denoiser.hpp"
#include "invmm/invert.hpp"
#include "invmm/judge.hpp"
#include "invmm/metrics.hpp"
#include "invmm/nn_test.hpp"
#include "invmm/prompt.hpp"
#include "invmm/train.hpp"

namespace invmm::cli {

/// Resolved run configuration: the parsed config file with environment
/// overrides applied (INVMM_section__key=value, value parsed as JSON when
/// possible) and the effective seed. Everything an artifact embeds comes
/// from here, so a report can be regenerated from its manifest alone.
struct RunConfig {
    nlohmann::json root = nlohmann::json::object();
    std::uint64_t seed = 0;

    static RunConfig load(const std::filesystem::path& config_path,
                          std::optional<std::uint64_t> seed_override);
    /// Config without a file (defaults only), for tests.
    static RunConfig defaults();

    const nlohmann::json& section(const std::string& name) const;
    bool has(const std::string& name) const { return root.contains(name); }

    // Typed views with full defaulting. Section names match the keys below.
    DatasetSpec dataset_spec() const;                       // "dataset"
    std::size_t schedule_steps() const;                     // "schedule"
    NoiseSchedule schedule() const;
    DenoiserConfig model_config(std::size_t data_dim, std::size_t vocab_size) const; // "model"
    TrainConfig train_config() const;                       // "train"
    SamplerConfig sampler_config(const NoiseSchedule& sched) const; // "sampler"
    InversionConfig inversion_config(const NoiseSchedule& sched) const; // "inversion"
    PromptInvConfig prompt_config() const;                  // "prompt"
    JudgeConfig judge_config() const;                       // "judge" (beta may be 0 = calibrate)
    double judge_percentile() const;
    LossBaselineConfig baseline_config() const;             // "baseline"

    std::string get_string(const std::string& section, const std::string& key,
                           const std::string& fallback) const;
    double get_double(const std::string& section, const std::string& key, double fallback) const;
    std::size_t get_size(const std::string& section, const std::string& key,
                         std::size_t fallback) const;
    bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
};

/// Apply INVMM_* environment overrides onto a config tree.
void apply_env_overrides(nlohmann::json& root);

} // namespace invmm::cli
