#pragma once

#include "gbrs/tensor.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gbrs::service {

std::string base64_encode(std::string_view bytes);
/// Throws InputError on characters outside the standard alphabet.
std::string base64_decode(std::string_view text);

/// 8-bit paletted PNG of a label map; entry i of `palette` is RGB for label i.
std::string encode_png_paletted(std::span<const std::uint8_t> labels, std::size_t height, std::size_t width,
                                std::span<const std::uint8_t> palette_rgb);

struct Quantized {
    std::string png;
    double min = 0.0;
    double max = 0.0;
};

/// 16-bit grayscale PNG; value = min + q / 65535 * (max - min).
Quantized encode_png_gray16(std::span<const double> values, std::size_t height, std::size_t width);
std::vector<double> decode_png_gray16(std::string_view png, double min, double max, std::size_t& height,
                                      std::size_t& width);

/// RGB image [3,H,W] in [0,1] from PNG (8/16 bit, any colour type) or binary PPM bytes.
Tensor decode_image(std::string_view bytes);
/// Single-channel map [H,W] in [0,1] from PNG or binary PGM bytes.
Tensor decode_gray(std::string_view bytes);

/// Fixed colours for background and the five shape classes; binary masks use entries 0 and 1.
const std::vector<std::uint8_t>& class_palette();

} // namespace gbrs::service
