#pragma once

#include "gbrs/click.hpp"
#include "gbrs/network.hpp"

#include <span>

namespace gbrs {

/// Assembles the [1,Cin,H,W] network input from an RGB image [3,H,W]:
/// interactive_seg appends the two interaction maps of `clicks`, matting
/// appends `trimap` ([H,W]), the other tasks use RGB alone.
Tensor build_network_input(const NetworkSpec& spec, const Tensor& image, const Tensor* trimap = nullptr,
                           std::span<const Click> clicks = {});

} // namespace gbrs
