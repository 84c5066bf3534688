#pragma once

#include "gbrs/click.hpp"
#include "gbrs/tensor.hpp"

#include <span>

namespace gbrs {

/// Two-channel click encoding [2,H,W]: channel 0 from positive clicks
/// (label > 0), channel 1 from the rest. Each pixel holds the distance to the
/// nearest click of that polarity, clipped at `clip` and divided by it; a
/// channel without clicks is all ones.
Tensor encode_interaction_maps(std::span<const Click> clicks, std::size_t height, std::size_t width,
                               double clip = 255.0);

} // namespace gbrs
