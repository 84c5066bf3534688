#include "gbrs/objectives.hpp"

#include "gbrs/errors.hpp"
#include "gbrs/ops.hpp"

#include <cmath>

namespace gbrs {

namespace {

struct Layout {
    std::size_t channels, height, width;
};

Layout layout(Var pred) {
    const Shape& s = pred.value().shape();
    if (s.size() == 2) return {1, s[0], s[1]};
    if (s.size() == 4 && s[0] == 1) return {s[1], s[2], s[3]};
    throw DimensionError("prediction must be [H,W] or [1,C,H,W], got " + shape_to_string(s));
}

std::size_t click_index(const Click& c, const Layout& l) {
    if (c.u < 0 || c.v < 0 || static_cast<std::size_t>(c.u) >= l.height || static_cast<std::size_t>(c.v) >= l.width) {
        throw InputError("click (" + std::to_string(c.u) + "," + std::to_string(c.v) + ") outside the prediction");
    }
    return static_cast<std::size_t>(c.u) * l.width + static_cast<std::size_t>(c.v);
}

Var zero(Var like) { return like.graph()->constant(Tensor::scalar(0.0)); }

} // namespace

std::vector<std::size_t> disk_pixels(int u, int v, double radius, std::size_t height, std::size_t width) {
    std::vector<std::size_t> out;
    const double r2 = radius * radius;
    const int reach = static_cast<int>(std::floor(radius));
    for (int h = std::max(0, u - reach); h <= std::min(static_cast<int>(height) - 1, u + reach); ++h) {
        for (int w = std::max(0, v - reach); w <= std::min(static_cast<int>(width) - 1, v + reach); ++w) {
            const double d2 = double(h - u) * (h - u) + double(w - v) * (w - v);
            if (d2 <= r2) out.push_back(static_cast<std::size_t>(h) * width + static_cast<std::size_t>(w));
        }
    }
    return out;
}

Tensor build_attention_mask(MaskKind kind, const Click& click, std::size_t height, std::size_t width) {
    if (!(click.radius > 0.0)) throw ContractError("attention radius must be positive");
    Tensor mask(Shape{height, width}, 1.0);
    if (kind == MaskKind::binary_disk) {
        for (auto i : disk_pixels(click.u, click.v, click.radius, height, width)) mask[i] = 0.0;
        return mask;
    }
    const double two_r2 = 2.0 * click.radius * click.radius;
    for (std::size_t h = 0; h < height; ++h) {
        for (std::size_t w = 0; w < width; ++w) {
            const double dh = double(h) - click.u, dw = double(w) - click.v;
            mask[h * width + w] = 1.0 - std::exp(-(dh * dh + dw * dw) / two_r2);
        }
    }
    return mask;
}

Var loss_click_binary(Var pred, std::span<const Click> clicks) {
    const Layout l = layout(pred);
    if (clicks.empty()) return zero(pred);
    std::vector<std::size_t> idx;
    Tensor labels(Shape{clicks.size()});
    for (std::size_t i = 0; i < clicks.size(); ++i) {
        if (clicks[i].label != 1.0 && clicks[i].label != -1.0) throw InputError("binary click label must be +1 or -1");
        idx.push_back(click_index(clicks[i], l));
        labels[i] = -clicks[i].label;
    }
    Graph& g = *pred.graph();
    const Var margin = ops::add_scalar(ops::mul(ops::gather(pred, idx), g.constant(labels)), 1.0);
    return ops::sum(ops::square(ops::relu(margin)));
}

Var loss_consistency_mse(Var pred, const Tensor& prev, const Tensor& mask, double lambda) {
    const Layout l = layout(pred);
    if (prev.numel() != pred.value().numel() || l.channels != 1) {
        throw DimensionError("consistency: previous prediction " + shape_to_string(prev.shape()) +
                             " does not match " + shape_to_string(pred.value().shape()));
    }
    if (mask.numel() != l.height * l.width) throw DimensionError("consistency: mask does not match H x W");
    Graph& g = *pred.graph();
    const Var diff = ops::sub(g.constant(prev.reshaped(pred.value().shape())), pred);
    const Var masked = ops::mul(diff, g.constant(mask.reshaped(pred.value().shape())));
    return ops::scale(ops::sum(ops::square(masked)), lambda / static_cast<double>(l.height * l.width));
}

Var loss_click_ce(Var pred, std::span<const Click> clicks) {
    const Layout l = layout(pred);
    if (clicks.empty()) return zero(pred);
    std::vector<std::size_t> idx;
    for (const auto& c : clicks) {
        if (c.label < 0 || c.label >= static_cast<double>(l.channels) || c.label != std::floor(c.label)) {
            throw InputError("class id " + std::to_string(c.label) + " outside 0.." + std::to_string(l.channels - 1));
        }
        idx.push_back(static_cast<std::size_t>(c.label) * l.height * l.width + click_index(c, l));
    }
    return ops::scale(ops::mean(ops::gather(ops::channel_log_softmax(pred), idx)), -1.0);
}

Var loss_consistency_ce(Var pred, std::span<const std::uint8_t> prev_classes, std::span<const std::uint8_t> ignore,
                        double lambda) {
    const Layout l = layout(pred);
    const std::size_t hw = l.height * l.width;
    if (prev_classes.size() != hw || ignore.size() != hw) throw DimensionError("consistency: maps do not match H x W");
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < hw; ++i) {
        if (ignore[i]) continue;
        if (prev_classes[i] >= l.channels) throw InputError("previous class outside the class range");
        idx.push_back(prev_classes[i] * hw + i);
    }
    if (idx.empty()) return zero(pred);
    return ops::scale(ops::mean(ops::gather(ops::channel_log_softmax(pred), idx)), -lambda);
}

Var loss_stroke_ce(Var pred, std::span<const int> finetune_mask) {
    const Layout l = layout(pred);
    const std::size_t hw = l.height * l.width;
    if (finetune_mask.size() != hw) throw DimensionError("finetune mask does not match H x W");
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < hw; ++i) {
        const int c = finetune_mask[i];
        if (c == static_cast<int>(l.channels)) continue;
        if (c < 0 || c > static_cast<int>(l.channels)) throw InputError("finetune mask value outside 0..C");
        idx.push_back(static_cast<std::size_t>(c) * hw + i);
    }
    if (idx.empty()) throw ContractError("finetune mask has no labelled pixels");
    return ops::scale(ops::mean(ops::gather(ops::channel_log_softmax(pred), idx)), -1.0);
}

Var loss_click_value(Var pred, std::span<const Click> clicks, Reduction reduction) {
    const Layout l = layout(pred);
    if (clicks.empty()) return zero(pred);
    std::vector<std::size_t> idx;
    Tensor labels(Shape{clicks.size()});
    for (std::size_t i = 0; i < clicks.size(); ++i) {
        idx.push_back(click_index(clicks[i], l));
        labels[i] = clicks[i].label;
    }
    const Var err = ops::square(ops::sub(pred.graph()->constant(labels), ops::gather(pred, idx)));
    return reduction == Reduction::mean ? ops::mean(err) : ops::sum(err);
}

Var loss_push(Var pred, const Tensor& prev, const Click& click, PushDirection direction, double epsilon) {
    const Layout l = layout(pred);
    if (prev.numel() != pred.value().numel()) throw DimensionError("push: previous prediction does not match");
    const std::size_t i = click_index(click, l);
    const double target = prev[i] + (direction == PushDirection::up ? epsilon : -epsilon);
    const std::size_t idx[] = {i};
    return ops::square(ops::add_scalar(ops::scale(ops::gather(pred, idx), -1.0), target));
}

Var loss_inertial(std::span<const Var> params, std::span<const Tensor> initial, double lambda) {
    if (params.size() != initial.size() || params.empty()) throw ContractError("inertial: parameter lists differ");
    Graph& g = *params.front().graph();
    Var total;
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].value().numel() != initial[i].numel()) throw DimensionError("inertial: shape mismatch");
        const Var term = ops::sum(ops::square(ops::sub(params[i], g.constant(initial[i].reshaped(params[i].shape())))));
        total = total.valid() ? ops::add(total, term) : term;
    }
    return ops::scale(total, lambda);
}

} // namespace gbrs
