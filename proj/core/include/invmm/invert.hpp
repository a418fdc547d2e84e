#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "invmm/denoiser.hpp"
#include "invmm/judge.hpp"
#include "invmm/noise_dist.hpp"
#include "invmm/sampler.hpp"

namespace invmm {

enum class LossMode { x0, eps0 };

LossMode loss_mode_from_string(const std::string& s);
std::string to_string(LossMode m);

struct InversionConfig {
    std::size_t iterations = 2000;        // optimizer steps (T)
    std::size_t cycle = 10;               // observation cycle (C)
    double increment = 5e-4;              // weight increment (delta)
    double improvement_threshold = 1e-3;  // xi
    double learning_rate = 1e-1;          // gamma
    std::size_t sensitivity_samples = 16; // K
    std::size_t batch_size = 8;           // noise draws per step
    std::size_t timestep_samples = 8;     // timesteps per denoising-error estimate
    LossMode loss_mode = LossMode::x0;
    std::uint64_t seed = 0;
    SamplerConfig sampler; // generation settings for sensitivity tests
    double lambda_floor = 1e-8;
    void validate() const;
};

enum class TraceEvent { none, halve, cycle, earlystop };
std::string to_string(TraceEvent e);

struct TraceRow {
    std::size_t step = 0; // 1-based optimizer step
    double lambda = 0.0;  // weight in effect during this step's objective
    double l_de = 0.0;
    double l_kl = 0.0;
    TraceEvent event = TraceEvent::none;
};

struct InversionResult {
    /// Dimension-averaged divergence of the inverted distribution when the
    /// inversion succeeded; +infinity otherwise (success == false).
    double score = std::numeric_limits<double>::infinity();
    bool success = false;
    std::size_t stop_step = 0;
    std::vector<TraceRow> trace;
    double sensitivity_fraction = 0.0; // replicated fraction at the last test
    Tensor final_mu;
    Tensor final_log_var;
};

struct InversionError : std::runtime_error {
    InversionError(const std::string& what, std::vector<TraceRow> trace_rows)
        : std::runtime_error(what), trace(std::move(trace_rows)) {}
    std::vector<TraceRow> trace;
};

/// One weight update of the additive-increase/multiplicative-decrease rule:
/// at a cycle boundary, halve when the improvement (l_de_prev - l_de_now)
/// falls below xi, otherwise add delta; off-boundary, always add delta.
double lambda_update(double lambda, double l_de_now, double l_de_prev, bool at_cycle_boundary,
                     double xi, double delta);

/// Stateful form used by the inversion loop: tracks per-cycle means of the
/// per-step denoising error (minibatch estimates are too noisy to compare
/// instantaneously) and applies lambda_update with a halving floor.
class WeightScheduler {
public:
    WeightScheduler(std::size_t cycle, double delta, double xi, double lambda0 = 1.0,
                    double floor = 1e-8);

    double lambda() const { return lambda_; }
    /// Feed step i's (1-based) denoising error after the optimizer update;
    /// returns the event applied to lambda and whether `i` closed a cycle.
    struct Outcome {
        TraceEvent event = TraceEvent::none;
        bool boundary = false;
    };
    Outcome after_step(std::size_t step_index, double l_de);

private:
    std::size_t cycle_;
    double delta_;
    double xi_;
    double lambda_;
    double floor_;
    double prev_cycle_mean_ = std::numeric_limits<double>::infinity();
    double acc_ = 0.0;
    std::size_t acc_n_ = 0;
};

struct SensitivityOutcome {
    double fraction = 0.0;
    bool all_replicated = false;
};

/// Condition supply for conditional inversion. `draws` yields one embedding
/// row per noise draw for the loss path (differentiable when it depends on
/// learnable logits); `draws_plain` feeds generation during sensitivity
/// tests. `cfg_scales` lists guidance scales swept at sensitivity time; a
/// sample counts as replicated if any scale replicates.
struct CondSource {
    std::function<Var(std::size_t count, Rng& rng)> draws;
    std::function<Tensor(std::size_t count, Rng& rng)> draws_plain;
    std::vector<double> cfg_scales;
};

/// Fixed-id condition source (inversion of the noise only).
CondSource fixed_cond_source(const Denoiser& model, std::size_t cond_id, double cfg_scale);

/// Monte-Carlo denoising error: `config.batch_size` draws from `dist`
/// crossed with `config.timestep_samples` timesteps uniform on [1, T];
/// differentiable w.r.t. the distribution (and condition logits when the
/// source depends on them).
Var denoising_error(const Denoiser& model, const NoiseSchedule& sched, const Tensor& x0,
                    const NoiseDistribution& dist, const InversionConfig& config, Rng& rng,
                    const CondSource* cond = nullptr);

/// Draw K noises (and conditions), generate, judge against the target.
SensitivityOutcome sensitivity_test(const Denoiser& model, const NoiseSchedule& sched,
                                    const NoiseDistribution& dist, const Tensor& x0,
                                    const ReplicationJudge& judge, std::size_t k,
                                    const SamplerConfig& sampler, Rng& rng,
                                    const CondSource* cond = nullptr);

/// Inversion driver knobs shared by the adaptive and fixed-weight entry
/// points and by the joint (condition-learning) wrapper.
struct InversionHooks {
    std::vector<std::pair<std::string, Var>> extra_params;
    std::function<Var()> extra_loss; // added to the objective when set
    const CondSource* cond = nullptr;
};

InversionResult invert_core(const Denoiser& model, const NoiseSchedule& sched, const Tensor& x0,
                            const InversionConfig& config, const ReplicationJudge& judge,
                            const InversionHooks& hooks, std::optional<double> fixed_lambda);

/// Adaptive-weight inversion of the sensitive noise distribution for `x0`.
/// `cond_id` pins the condition of a conditional model.
InversionResult invert(const Denoiser& model, const NoiseSchedule& sched, const Tensor& x0,
                       const InversionConfig& config, const ReplicationJudge& judge,
                       std::optional<std::size_t> cond_id = std::nullopt);

/// Same loop with the weight pinned to `lambda_fixed` (no AIMD updates).
InversionResult fixed_lambda_invert(const Denoiser& model, const NoiseSchedule& sched,
                                    const Tensor& x0, const InversionConfig& config,
                                    const ReplicationJudge& judge, double lambda_fixed,
                                    std::optional<std::size_t> cond_id = std::nullopt);

/// CSV export: step,lambda,l_de,l_kl,event with event in
/// {none,halve,cycle,earlystop}.
std::string trace_to_csv(const InversionResult& result);

} // namespace invmm
