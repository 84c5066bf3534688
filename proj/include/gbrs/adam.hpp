#pragma once

#include "gbrs/tensor.hpp"

#include <span>
#include <vector>

namespace gbrs {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First/second moments per parameter tensor plus the shared step count.
struct AdamState {
    std::size_t step = 0;
    std::vector<Tensor> m;
    std::vector<Tensor> v;

    bool identical(const AdamState& other) const;
};

/// Bias-corrected Adam. Moments are created lazily on the first step.
class Adam {
  public:
    Adam() = default;
    explicit Adam(AdamConfig config) : config_(config) {}

    void step(std::span<Tensor* const> params, std::span<const Tensor> grads);

    const AdamConfig& config() const { return config_; }
    AdamConfig& config() { return config_; }
    const AdamState& state() const { return state_; }
    AdamState& state() { return state_; }

  private:
    AdamConfig config_;
    AdamState state_;
};

} // namespace gbrs
