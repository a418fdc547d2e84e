#pragma once

#include <string>
#include <vector>

#include "invmm/graph.hpp"

namespace invmm {

struct AdamConfig {
    double lr = 1e-1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First/second moment state for one parameter tensor.
struct AdamSlot {
    Tensor m;
    Tensor v;
};

/// One bias-corrected Adam update, in place. `step_index` is 1-based.
/// Throws TrainingError (naming `param_name`) on a non-finite gradient.
void adam_step(Tensor& param, const Tensor& grad, AdamSlot& slot, long step_index,
               const AdamConfig& cfg, const std::string& param_name);

/// Adam over a fixed set of named trainable leaves. Gradients are read from
/// a GradientMap produced by backward(); leaves absent from the map get a
/// zero gradient.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    void add_param(std::string name, Var param);
    void step(const GradientMap& grads);
    long step_count() const { return step_count_; }
    const AdamConfig& config() const { return cfg_; }

private:
    struct Entry {
        std::string name;
        Var param;
        AdamSlot slot;
    };
    AdamConfig cfg_;
    std::vector<Entry> entries_;
    long step_count_ = 0;
};

} // namespace invmm
