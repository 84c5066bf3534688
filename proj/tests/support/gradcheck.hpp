#pragma once

// Central finite-difference oracle. Evaluates the forward function as a black
// box with perturbed inputs; it never reads gradients computed by the tape
// except for the analytic side of the comparison.

#include "gbrs/graph.hpp"
#include "gbrs/ops.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace gbrs::testing {

using BuildFn = std::function<Var(Graph&, const std::vector<Var>&)>;

struct GradCheckResult {
    double max_rel_error = 0.0; // max |analytic - numeric| / (|analytic| + 1e-8)
    double max_abs_error = 0.0;
    std::size_t checked = 0;
    std::string worst;
};

inline std::vector<Tensor> analytic_gradients(const std::vector<Tensor>& params, const BuildFn& build) {
    Graph g;
    std::vector<Var> vars;
    for (const auto& p : params) vars.push_back(g.parameter(p));
    Var root = build(g, vars);
    g.backward(root);
    std::vector<Tensor> grads;
    for (auto& v : vars) grads.push_back(v.grad());
    return grads;
}

inline double evaluate(const std::vector<Tensor>& params, const BuildFn& build) {
    Graph g;
    std::vector<Var> vars;
    for (const auto& p : params) vars.push_back(g.constant(p));
    return build(g, vars).value().item();
}

/// Compares tape gradients against central differences for the tensors in
/// `which` (all when empty).
inline GradCheckResult check_gradients(std::vector<Tensor> params, const BuildFn& build,
                                       double h = 1e-5, std::vector<std::size_t> which = {}) {
    if (which.empty()) {
        for (std::size_t i = 0; i < params.size(); ++i) which.push_back(i);
    }
    const std::vector<Tensor> grads = analytic_gradients(params, build);
    GradCheckResult result;
    for (std::size_t j : which) {
        for (std::size_t k = 0; k < params[j].numel(); ++k) {
            const double original = params[j][k];
            params[j][k] = original + h;
            const double up = evaluate(params, build);
            params[j][k] = original - h;
            const double down = evaluate(params, build);
            params[j][k] = original;
            const double numeric = (up - down) / (2.0 * h);
            const double analytic = grads[j][k];
            const double abs_err = std::abs(analytic - numeric);
            const double rel = abs_err / (std::abs(analytic) + 1e-8);
            ++result.checked;
            result.max_abs_error = std::max(result.max_abs_error, abs_err);
            if (rel > result.max_rel_error) {
                result.max_rel_error = rel;
                result.worst = "param " + std::to_string(j) + "[" + std::to_string(k) +
                               "] analytic=" + std::to_string(analytic) +
                               " numeric=" + std::to_string(numeric);
            }
        }
    }
    return result;
}

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = dist(rng);
    return t;
}

/// Weights with magnitude in [0.5, 1] and random sign, so no output is
/// projected away by a near-zero coefficient.
inline Tensor projection_weights(const Shape& shape, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> mag(0.5, 1.0);
    std::bernoulli_distribution sign(0.5);
    Tensor t(shape);
    for (auto& v : t.data()) v = sign(rng) ? mag(rng) : -mag(rng);
    return t;
}

/// Scalar root sum(y * r) for a fixed random r.
inline Var project(Graph& g, Var y, const Tensor& weights) {
    return ops::sum(ops::mul(y, g.constant(weights)));
}

} // namespace gbrs::testing
