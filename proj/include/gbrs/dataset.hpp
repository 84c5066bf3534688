#pragma once

#include "gbrs/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace gbrs {

/// One synthetic shapes scene. Per-pixel maps are row-major H x W.
struct Sample {
    std::size_t height = 0;
    std::size_t width = 0;
    Tensor image;                       // [3,H,W] in [0,1]
    std::vector<std::uint8_t> gt_binary; // largest visible shape
    std::vector<std::uint8_t> gt_classes; // 0 = background, 1..5 shape classes
    Tensor gt_alpha;                    // [H,W]
    Tensor gt_depth;                    // [H,W] meters
    Tensor trimap;                      // [H,W] in {0, 0.5, 1}
};

/// Shapes per class id: 1 ellipse, 2 rectangle, 3 triangle, 4 rectangle, 5 ellipse.
/// Classes 1/5 and 2/4 differ only in colour.
enum class ShapeKind { ellipse, rectangle, triangle };
ShapeKind shape_kind_for_class(int class_id);

/// `shifted` keeps the geometry rules but changes the look: tinted
/// backgrounds, stronger colour jitter and pixel noise. Networks trained on
/// `standard` scenes make region-sized mistakes on it.
enum class DatasetStyle { standard, shifted };

/// `n` samples of size x size, size in {64, 96, 128}. Sample i draws from a
/// stream derived from (seed, i) so any sample can be regenerated alone.
std::vector<Sample> generate_dataset(std::size_t n, std::size_t size, std::uint64_t seed,
                                     DatasetStyle style = DatasetStyle::standard);
Sample generate_sample(std::size_t size, std::uint64_t seed, std::size_t index,
                       DatasetStyle style = DatasetStyle::standard);

/// Writes PPM/PGM files plus manifest.txt into `dir` (created if missing).
void export_dataset(const std::vector<Sample>& samples, const std::filesystem::path& dir);

} // namespace gbrs
