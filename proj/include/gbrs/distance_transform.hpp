#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace gbrs {

/// Exact squared Euclidean distance from every pixel to the nearest seed
/// (seed != 0), computed with the lower-envelope-of-parabolas method in two
/// separable passes. With `border_seeds`, the ring of pixels just outside
/// the image also counts as seeds. Pixels with no reachable seed get +inf.
std::vector<double> squared_distance_to_seeds(std::span<const std::uint8_t> seeds, std::size_t height,
                                              std::size_t width, bool border_seeds);

/// Euclidean distance from each 1-pixel of `mask` to the nearest 0-pixel,
/// the image border counting as 0 (zero padding). 0-pixels map to 0.
std::vector<double> distance_transform(std::span<const std::uint8_t> mask, std::size_t height, std::size_t width);

} // namespace gbrs
