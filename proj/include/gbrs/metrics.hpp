#pragma once

#include "gbrs/click.hpp"
#include "gbrs/tensor.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace gbrs {

/// Foreground IoU of two binary masks; 1 when both are empty.
double metric_iou(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt);

/// Mean IoU over the classes present in `gt`; ignored pixels excluded.
double metric_miou(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt,
                   std::uint8_t ignore = kIgnoreLabel);

double metric_pixel_accuracy(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt,
                             std::uint8_t ignore = kIgnoreLabel);

struct MattingMetrics {
    double sad = 0.0;  // sum of absolute differences (not divided by 1000)
    double mse = 0.0;
    double grad = 0.0; // Gaussian-derivative gradient error, sigma 1.4
    double conn = 0.0; // connectivity error, threshold step 0.1
};

MattingMetrics metric_matting(std::span<const double> pred, std::span<const double> gt, std::size_t height,
                              std::size_t width);

struct DepthMetrics {
    double delta1 = 0.0;
    double delta2 = 0.0;
    double delta3 = 0.0;
    double abs_rel = 0.0;
    double sq_rel = 0.0;
    double rmse = 0.0;
    double rmse_log = 0.0;
};

/// Means over valid pixels (all pixels when `valid` is empty).
DepthMetrics metric_depth(std::span<const double> pred, std::span<const double> gt,
                          std::span<const std::uint8_t> valid = {});

enum class Direction { higher_better, lower_better };

/// Trapezoidal mean over clicks 0..N: (1/N) * sum_k (m[k-1] + m[k]) / 2.
double auc_over_clicks(std::span<const double> series);

} // namespace gbrs
