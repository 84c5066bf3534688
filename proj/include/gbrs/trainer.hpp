#pragma once

#include "gbrs/click.hpp"
#include "gbrs/dataset.hpp"
#include "gbrs/network.hpp"

#include <functional>
#include <vector>

namespace gbrs {

struct TrainConfig {
    std::size_t epochs = 30;
    double lr = 3e-3;
    std::size_t batch_size = 4;
    std::uint64_t seed = 0;
};

struct EpochLog {
    std::size_t epoch = 0;
    double mean_loss = 0.0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Adam training with the task loss: BCE on logits (interactive_seg, with
/// 1-3 random positive and 0-3 negative clicks per sample), cross entropy
/// with ignore label (semantic_seg), L1 (matting), L2 on log-depth (depth).
/// Returns the trained network; the input is left untouched.
/// Throws TrainingError naming the epoch if the loss becomes non-finite.
Network train(const Network& net, const std::vector<Sample>& data, const TrainConfig& config,
              const EpochCallback& on_epoch = {});

/// Input channels of `sample` for this task.
Tensor sample_input(const NetworkSpec& spec, const Sample& sample, std::span<const Click> clicks = {});

/// Click at the interior point of `mask` farthest from its border (ties to
/// the first pixel in row-major order), radius = that distance.
Click center_click(std::span<const std::uint8_t> mask, std::size_t height, std::size_t width, double label = 1.0);

/// Held-out quality: mean IoU from one center click (interactive_seg),
/// pixel accuracy (semantic_seg), MSE (matting), delta1 (depth).
double holdout_score(const Network& net, const std::vector<Sample>& data);

} // namespace gbrs
