#pragma once

#include <cstdint>
#include <vector>

namespace gbrs {

/// One interaction (u, v, r, l): row, column, attention radius in pixels and a
/// task-dependent target (+1/-1 for binary segmentation, a class id, an alpha
/// value or a depth in meters).
struct Click {
    int u = 0;
    int v = 0;
    double radius = 1.0;
    double label = 1.0;

    bool operator==(const Click&) const = default;
};

enum class PushDirection { up, down };

/// One disk of a class stroke.
struct StrokePoint {
    int u = 0;
    int v = 0;
    double radius = 1.0;
    int class_id = 0;
};

/// Label value used for ignored pixels in class ground truth.
inline constexpr std::uint8_t kIgnoreLabel = 255;

} // namespace gbrs
