#pragma once

#include "gbrs/graph.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace gbrs::ops {

/// Cross-correlation of [N,Cin,H,W] with [Cout,Cin,k,k] plus per-channel bias.
Var conv2d(Var input, Var weight, Var bias, std::size_t stride, std::size_t padding);

enum class ElementwiseKind { add, sub, mul };

/// `b` may equal `a` in shape, be a scalar, or broadcast against a 4-d `a`
/// as per-channel [C], per-position [H,W] or [1,C,H,W]. Broadcast gradients
/// are summed over the broadcast axes.
Var elementwise(ElementwiseKind kind, Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);

enum class ActivationKind { relu, sigmoid, softplus };

/// relu'(0) is taken as 0.
Var activation(ActivationKind kind, Var x);
Var relu(Var x);
Var sigmoid(Var x);
Var softplus(Var x);

Var log(Var x);
Var abs(Var x);
Var square(Var x);
Var scale(Var x, double factor);
Var add_scalar(Var x, double offset);

/// Log-probabilities over axis 1 of an [N,C,H,W] tensor, max-subtracted.
Var channel_log_softmax(Var x);

/// Bilinear resize by an integer factor in {2, 4}, half-pixel centres
/// (align_corners = false); source coordinates are clamped at the border.
Var upsample_bilinear(Var x, std::size_t factor);

Var sum(Var x);
Var mean(Var x);

/// Picks flat elements by index; result shape [indices.size()].
Var gather(Var x, std::span<const std::size_t> indices);

/// Channels `channels` of an [N,C,H,W] tensor as [N,K,H,W].
Var gather_channels(Var x, std::span<const std::size_t> channels);

/// `base` with channels `channels` replaced by the K channels of `replacement`.
Var scatter_channels(Var base, Var replacement, std::span<const std::size_t> channels);

/// Outer product of a [H,W] map with a [C] weight vector as [1,C,H,W].
Var channel_weighted_map(Var map, Var channel_weights);

Var reshape(Var x, Shape shape);

} // namespace gbrs::ops
