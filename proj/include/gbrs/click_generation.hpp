#pragma once

#include "gbrs/click.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace gbrs {

struct OtsuResult {
    double threshold = 0.0; // lower edge of the first foreground bin
    std::size_t bin = 0;    // values in bins >= bin are foreground
    double lo = 0.0;
    double hi = 0.0;
};

/// Bin of `value` in a 256-bin histogram over [lo, hi].
std::size_t otsu_bin(double value, double lo, double hi);

/// Threshold maximising the between-class variance of a 256-bin histogram
/// over the value range; the lower threshold wins ties. Throws ContractError
/// on fewer than two distinct values.
OtsuResult otsu_threshold(std::span<const double> values);

/// Pixels of the 4-connected component of `mask` containing (u, v).
std::vector<std::size_t> component_at(std::span<const std::uint8_t> mask, std::size_t height, std::size_t width,
                                      int u, int v);

/// Largest distance from (u, v) to a boundary pixel of its 4-connected
/// component (a pixel with a 4-neighbour outside the component or off the
/// image), clamped below at 1.
double component_radius(std::span<const std::uint8_t> mask, std::size_t height, std::size_t width, int u, int v);

/// Square dilation with a k x k kernel (k odd), clipped at the border.
std::vector<std::uint8_t> dilate_square(std::span<const std::uint8_t> mask, std::size_t height, std::size_t width,
                                        std::size_t k);

inline constexpr double kMinClickRadius = 1.0;

struct GeneratedClick {
    bool converged = false;
    Click click;
};

/// Next simulated click for a classification output. Error masks are built
/// per ground-truth class; the class whose mask holds the deepest interior
/// point wins (ties to the lower class, then the first pixel in row-major
/// order). With `binary`, the label is +1 for foreground and -1 otherwise;
/// otherwise it is the class id. Pixels with gt == ignore are skipped.
GeneratedClick generate_click_classification(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt,
                                             std::size_t height, std::size_t width, bool binary,
                                             std::uint8_t ignore = kIgnoreLabel);

/// Next simulated click for a regression output: Otsu on |pred - gt| over
/// valid pixels, split by sign, the sign with the deeper interior point
/// wins (ties to positive), radius measured on the dilated mask (15x15 by default),
/// label = gt at the click. Converged when max |pred - gt| <= tolerance.
GeneratedClick generate_click_regression(std::span<const double> pred, std::span<const double> gt,
                                         std::span<const std::uint8_t> valid, std::size_t height, std::size_t width,
                                         double tolerance = 1e-6, std::size_t dilation = 15);

} // namespace gbrs
