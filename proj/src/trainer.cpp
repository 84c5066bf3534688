#include "gbrs/trainer.hpp"

#include "gbrs/adam.hpp"
#include "gbrs/distance_transform.hpp"
#include "gbrs/errors.hpp"
#include "gbrs/network_input.hpp"
#include "gbrs/ops.hpp"
#include "gbrs/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace gbrs {

namespace {

// Uniform pixel among those with `want`, preferring pixels at least 2 from the region border.
std::size_t pick_pixel(Rng& rng, const std::vector<std::uint8_t>& mask, std::uint8_t want, std::size_t h,
                       std::size_t w) {
    std::vector<std::uint8_t> region(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) region[i] = mask[i] == want;
    const auto dist = distance_transform(region, h, w);
    std::vector<std::size_t> inner, all;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (!region[i]) continue;
        all.push_back(i);
        if (dist[i] >= 2.0) inner.push_back(i);
    }
    const auto& pool = inner.empty() ? all : inner;
    return pool[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(pool.size()) - 1))];
}

std::vector<Click> random_clicks(Rng& rng, const Sample& s) {
    std::vector<Click> clicks;
    const auto npos = rng.uniform_int(1, 3), nneg = rng.uniform_int(0, 3);
    for (std::int64_t k = 0; k < npos + nneg; ++k) {
        const bool positive = k < npos;
        const std::size_t i = pick_pixel(rng, s.gt_binary, positive ? 1 : 0, s.height, s.width);
        clicks.push_back(Click{static_cast<int>(i / s.width), static_cast<int>(i % s.width), 5.0,
                               positive ? 1.0 : -1.0});
    }
    return clicks;
}

Tensor stack(const std::vector<Tensor>& items) {
    Shape shape = items.front().shape();
    shape[0] = items.size();
    Tensor out(shape);
    std::size_t offset = 0;
    for (const auto& t : items) {
        std::copy(t.data().begin(), t.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(offset));
        offset += t.numel();
    }
    return out;
}

Var task_loss(Graph& g, Task task, Var pred, const std::vector<const Sample*>& batch) {
    const std::size_t hw = batch.front()->height * batch.front()->width;
    const std::size_t n = batch.size();
    switch (task) {
    case Task::interactive_seg: {
        Tensor t(Shape{n, 1, batch[0]->height, batch[0]->width});
        for (std::size_t b = 0; b < n; ++b) {
            for (std::size_t i = 0; i < hw; ++i) t[b * hw + i] = batch[b]->gt_binary[i];
        }
        return ops::mean(ops::sub(ops::softplus(pred), ops::mul(pred, g.constant(t))));
    }
    case Task::semantic_seg: {
        const std::size_t c = kNumClasses;
        std::vector<std::size_t> idx;
        for (std::size_t b = 0; b < n; ++b) {
            for (std::size_t i = 0; i < hw; ++i) {
                const auto cls = batch[b]->gt_classes[i];
                if (cls == kIgnoreLabel) continue;
                idx.push_back((b * c + cls) * hw + i);
            }
        }
        if (idx.empty()) throw ContractError("batch has only ignored pixels");
        return ops::scale(ops::mean(ops::gather(ops::channel_log_softmax(pred), idx)), -1.0);
    }
    case Task::matting: {
        std::vector<Tensor> a;
        for (auto* s : batch) a.push_back(s->gt_alpha.reshaped(Shape{1, 1, s->height, s->width}));
        return ops::mean(ops::abs(ops::sub(pred, g.constant(stack(a)))));
    }
    case Task::depth: {
        std::vector<Tensor> d;
        for (auto* s : batch) {
            Tensor t = s->gt_depth.reshaped(Shape{1, 1, s->height, s->width});
            for (auto& v : t.data()) v = std::log(v);
            d.push_back(std::move(t));
        }
        return ops::mean(ops::square(ops::sub(ops::log(pred), g.constant(stack(d)))));
    }
    }
    throw ContractError("unknown task");
}

} // namespace

Tensor sample_input(const NetworkSpec& spec, const Sample& sample, std::span<const Click> clicks) {
    return build_network_input(spec, sample.image, &sample.trimap, clicks);
}

Network train(const Network& net, const std::vector<Sample>& data, const TrainConfig& config,
              const EpochCallback& on_epoch) {
    if (data.empty()) throw ContractError("training data is empty");
    if (config.batch_size == 0) throw ContractError("batch size must be positive");
    Network out = net;
    Adam adam(AdamConfig{config.lr});
    Rng rng = Rng::derive(config.seed, static_cast<std::uint64_t>(net.task()), 0x7a11);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<Tensor*> params;
    for (auto& w : out.weights()) params.push_back(&w);

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
        }
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            std::vector<const Sample*> batch;
            std::vector<Tensor> inputs;
            for (std::size_t k = start; k < std::min(order.size(), start + config.batch_size); ++k) {
                const Sample& s = data[order[k]];
                batch.push_back(&s);
                std::vector<Click> clicks;
                if (net.task() == Task::interactive_seg) clicks = random_clicks(rng, s);
                inputs.push_back(sample_input(out.spec(), s, clicks));
            }
            Graph g;
            std::vector<Var> bound;
            Var pred = out.forward(g, g.constant(stack(inputs)), {}, nullptr, &bound, true);
            Var loss = task_loss(g, net.task(), pred, batch);
            const double value = loss.value().item();
            if (!std::isfinite(value)) {
                throw TrainingError("training diverged in epoch " + std::to_string(epoch + 1) + " (loss " +
                                    std::to_string(value) + ")");
            }
            g.backward(loss);
            std::vector<Tensor> grads;
            for (auto& v : bound) grads.push_back(v.grad());
            adam.step(params, grads);
            loss_sum += value;
            ++batches;
        }
        if (on_epoch) on_epoch(EpochLog{epoch + 1, loss_sum / static_cast<double>(batches)});
    }
    return out;
}

Click center_click(std::span<const std::uint8_t> mask, std::size_t height, std::size_t width, double label) {
    const auto dist = distance_transform(mask, height, width);
    const auto best = std::max_element(dist.begin(), dist.end());
    if (*best <= 0.0) throw ContractError("center_click: empty mask");
    const auto i = static_cast<std::size_t>(best - dist.begin());
    return Click{static_cast<int>(i / width), static_cast<int>(i % width), *best, label};
}

double holdout_score(const Network& net, const std::vector<Sample>& data) {
    if (data.empty()) throw ContractError("holdout set is empty");
    double total = 0.0;
    for (const Sample& s : data) {
        const std::size_t hw = s.height * s.width;
        std::vector<Click> clicks;
        if (net.task() == Task::interactive_seg) clicks.push_back(center_click(s.gt_binary, s.height, s.width));
        const Tensor pred = net.evaluate(sample_input(net.spec(), s, clicks));
        switch (net.task()) {
        case Task::interactive_seg: {
            std::size_t inter = 0, uni = 0;
            for (std::size_t i = 0; i < hw; ++i) {
                const bool p = pred[i] > 0.0, t = s.gt_binary[i] != 0;
                inter += p && t;
                uni += p || t;
            }
            total += uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
            break;
        }
        case Task::semantic_seg: {
            std::size_t correct = 0, counted = 0;
            for (std::size_t i = 0; i < hw; ++i) {
                if (s.gt_classes[i] == kIgnoreLabel) continue;
                std::size_t arg = 0;
                for (std::size_t c = 1; c < kNumClasses; ++c) {
                    if (pred[c * hw + i] > pred[arg * hw + i]) arg = c;
                }
                correct += arg == s.gt_classes[i];
                ++counted;
            }
            total += counted ? static_cast<double>(correct) / static_cast<double>(counted) : 1.0;
            break;
        }
        case Task::matting: {
            double se = 0.0;
            for (std::size_t i = 0; i < hw; ++i) se += (pred[i] - s.gt_alpha[i]) * (pred[i] - s.gt_alpha[i]);
            total += se / static_cast<double>(hw);
            break;
        }
        case Task::depth: {
            std::size_t ok = 0;
            for (std::size_t i = 0; i < hw; ++i) {
                ok += std::max(pred[i] / s.gt_depth[i], s.gt_depth[i] / pred[i]) < 1.25;
            }
            total += static_cast<double>(ok) / static_cast<double>(hw);
            break;
        }
        }
    }
    return total / static_cast<double>(data.size());
}

} // namespace gbrs
