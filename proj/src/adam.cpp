#include "gbrs/adam.hpp"

#include "gbrs/errors.hpp"

#include <cmath>

namespace gbrs {

bool AdamState::identical(const AdamState& other) const {
    if (step != other.step || m.size() != other.m.size() || v.size() != other.v.size()) return false;
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (!m[i].identical(other.m[i]) || !v[i].identical(other.v[i])) return false;
    }
    return true;
}

void Adam::step(std::span<Tensor* const> params, std::span<const Tensor> grads) {
    if (params.size() != grads.size()) throw ContractError("adam: parameter and gradient counts differ");
    if (state_.m.empty()) {
        for (const Tensor* p : params) {
            state_.m.emplace_back(p->shape());
            state_.v.emplace_back(p->shape());
        }
    }
    if (state_.m.size() != params.size()) throw ContractError("adam: parameter count changed between steps");
    ++state_.step;
    const double t = static_cast<double>(state_.step);
    const double c1 = 1.0 - std::pow(config_.beta1, t);
    const double c2 = 1.0 - std::pow(config_.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& p = *params[k];
        const Tensor& g = grads[k];
        if (g.numel() != p.numel() || state_.m[k].numel() != p.numel()) {
            throw DimensionError("adam: gradient " + shape_to_string(g.shape()) + " does not match parameter " +
                                 shape_to_string(p.shape()));
        }
        double* m = state_.m[k].data().data();
        double* v = state_.v[k].data().data();
        double* x = p.data().data();
        const double* d = g.data().data();
        for (std::size_t i = 0; i < p.numel(); ++i) {
            m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * d[i];
            v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * d[i] * d[i];
            x[i] -= config_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
        }
    }
}

} // namespace gbrs
