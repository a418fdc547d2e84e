#include "invmm/optim.hpp"

#include <cmath>

#include "invmm/errors.hpp"

namespace invmm {

void adam_step(Tensor& param, const Tensor& grad, AdamSlot& slot, long step_index,
               const AdamConfig& cfg, const std::string& param_name) {
    if (!param.same_shape(grad)) {
        throw ContractError("adam_step shape mismatch for '" + param_name + "': " +
                            param.shape_str() + " vs " + grad.shape_str());
    }
    if (!grad.all_finite()) {
        throw TrainingError("non-finite gradient for parameter '" + param_name + "' at step " +
                            std::to_string(step_index));
    }
    if (slot.m.size() != param.size()) {
        slot.m = Tensor::zeros(param.shape());
        slot.v = Tensor::zeros(param.shape());
    }
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_index));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_index));
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double g = grad[i];
        slot.m[i] = cfg.beta1 * slot.m[i] + (1.0 - cfg.beta1) * g;
        slot.v[i] = cfg.beta2 * slot.v[i] + (1.0 - cfg.beta2) * g * g;
        const double mhat = slot.m[i] / c1;
        const double vhat = slot.v[i] / c2;
        param[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
}

void Adam::add_param(std::string name, Var param) {
    if (!param.requires_grad()) {
        throw ContractError("Adam parameter '" + name + "' is not trainable");
    }
    entries_.push_back({std::move(name), std::move(param), AdamSlot{}});
}

void Adam::step(const GradientMap& grads) {
    ++step_count_;
    for (auto& e : entries_) {
        Tensor p = e.param.value();
        const Tensor g = grads.get(e.param);
        adam_step(p, g, e.slot, step_count_, cfg_, e.name);
        e.param.set_value(std::move(p));
    }
}

} // namespace invmm
