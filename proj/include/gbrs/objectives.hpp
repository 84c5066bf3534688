#pragma once

#include "gbrs/click.hpp"
#include "gbrs/graph.hpp"

#include <span>
#include <vector>

namespace gbrs {

enum class MaskKind { binary_disk, inverse_gaussian };

/// binary_disk: 0 inside the closed disk (h-u)^2 + (w-v)^2 <= r^2, 1 outside.
/// inverse_gaussian: 1 - exp(-d^2 / (2 r^2)).
Tensor build_attention_mask(MaskKind kind, const Click& click, std::size_t height, std::size_t width);

/// Flat indices of the pixels inside the closed disk around (u, v).
std::vector<std::size_t> disk_pixels(int u, int v, double radius, std::size_t height, std::size_t width);

/// Predictions are single-image tensors: [1,1,H,W] (or [H,W]) for one-channel
/// outputs, [1,C,H,W] logits for classes.

/// Sum of squared hinges max(1 - l * pred, 0)^2 over clicks with labels +-1.
Var loss_click_binary(Var pred, std::span<const Click> clicks);

/// lambda / HW * || (prev - pred) * mask ||^2; `prev` is a constant.
Var loss_consistency_mse(Var pred, const Tensor& prev, const Tensor& mask, double lambda);

/// Mean negative log-likelihood of the clicked classes.
Var loss_click_ce(Var pred, std::span<const Click> clicks);

/// lambda * mean NLL of the previous argmax classes over the pixels where
/// `ignore` is 0; zero if every pixel is ignored.
Var loss_consistency_ce(Var pred, std::span<const std::uint8_t> prev_classes, std::span<const std::uint8_t> ignore,
                        double lambda);

/// Mean NLL over the labelled pixels of a finetune mask; the value C marks ignored pixels.
Var loss_stroke_ce(Var pred, std::span<const int> finetune_mask);

enum class Reduction { mean, sum };

/// Mean or sum over clicks of (l - pred[u,v])^2.
Var loss_click_value(Var pred, std::span<const Click> clicks, Reduction reduction);

/// ((prev[u,v] +- epsilon) - pred[u,v])^2, + for up.
Var loss_push(Var pred, const Tensor& prev, const Click& click, PushDirection direction, double epsilon = 0.1);

/// lambda * sum_i || p_i - p0_i ||^2.
Var loss_inertial(std::span<const Var> params, std::span<const Tensor> initial, double lambda);

} // namespace gbrs
