#include "gbrs/click_generation.hpp"

#include "gbrs/distance_transform.hpp"
#include "gbrs/errors.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace gbrs {

namespace {

struct Peak {
    double depth = 0.0;
    std::size_t index = 0;
};

// Deepest interior point; first pixel in row-major order on ties.
Peak deepest(std::span<const std::uint8_t> mask, std::size_t height, std::size_t width) {
    const auto d = distance_transform(mask, height, width);
    Peak p;
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (d[i] > p.depth) p = Peak{d[i], i};
    }
    return p;
}

} // namespace

std::size_t otsu_bin(double value, double lo, double hi) {
    const double t = (value - lo) / (hi - lo) * 256.0;
    return std::min<std::size_t>(255, static_cast<std::size_t>(std::max(0.0, std::floor(t))));
}

OtsuResult otsu_threshold(std::span<const double> values) {
    if (values.empty()) throw ContractError("otsu: no values");
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    const double lo = *mn, hi = *mx;
    if (!(hi > lo)) throw ContractError("otsu: field is constant");
    std::vector<std::uint64_t> hist(256, 0);
    for (double v : values) ++hist[otsu_bin(v, lo, hi)];
    std::uint64_t n = 0, s = 0;
    for (std::size_t i = 0; i < 256; ++i) {
        n += hist[i];
        s += i * hist[i];
    }
    // Between-class variance for a split at k is (n*s0 - n0*s)^2 / (n0*n1*n^2);
    // compare the fractions exactly in integers.
    using u128 = unsigned __int128;
    u128 best_num = 0, best_den = 1;
    std::size_t best_k = 0;
    std::uint64_t n0 = 0, s0 = 0;
    for (std::size_t k = 1; k < 256; ++k) {
        n0 += hist[k - 1];
        s0 += (k - 1) * hist[k - 1];
        const std::uint64_t n1 = n - n0;
        if (n0 == 0 || n1 == 0) continue;
        const __int128 diff = static_cast<__int128>(n) * s0 - static_cast<__int128>(n0) * s;
        const u128 num = static_cast<u128>(diff < 0 ? -diff : diff);
        const u128 sq = num * num;
        const u128 den = static_cast<u128>(n0) * n1;
        if (best_k == 0 || sq * best_den > best_num * den) {
            best_num = sq;
            best_den = den;
            best_k = k;
        }
    }
    return OtsuResult{lo + (hi - lo) * static_cast<double>(best_k) / 256.0, best_k, lo, hi};
}

std::vector<std::size_t> component_at(std::span<const std::uint8_t> mask, std::size_t height, std::size_t width,
                                      int u, int v) {
    const std::size_t start = static_cast<std::size_t>(u) * width + static_cast<std::size_t>(v);
    if (!mask[start]) return {};
    std::vector<std::uint8_t> seen(mask.size(), 0);
    std::vector<std::size_t> out;
    std::deque<std::size_t> queue{start};
    seen[start] = 1;
    while (!queue.empty()) {
        const std::size_t i = queue.front();
        queue.pop_front();
        out.push_back(i);
        const std::size_t h = i / width, w = i % width;
        auto visit = [&](std::size_t j) {
            if (mask[j] && !seen[j]) {
                seen[j] = 1;
                queue.push_back(j);
            }
        };
        if (h > 0) visit(i - width);
        if (h + 1 < height) visit(i + width);
        if (w > 0) visit(i - 1);
        if (w + 1 < width) visit(i + 1);
    }
    std::sort(out.begin(), out.end());
    return out;
}

double component_radius(std::span<const std::uint8_t> mask, std::size_t height, std::size_t width, int u, int v) {
    const auto comp = component_at(mask, height, width, u, v);
    std::vector<std::uint8_t> in(mask.size(), 0);
    for (auto i : comp) in[i] = 1;
    double best = 0.0;
    for (auto i : comp) {
        const std::size_t h = i / width, w = i % width;
        const bool boundary = h == 0 || w == 0 || h + 1 == height || w + 1 == width || !in[i - width] ||
                              !in[i + width] || !in[i - 1] || !in[i + 1];
        if (!boundary) continue;
        const double dh = double(h) - u, dw = double(w) - v;
        best = std::max(best, std::sqrt(dh * dh + dw * dw));
    }
    return std::max(best, kMinClickRadius);
}

std::vector<std::uint8_t> dilate_square(std::span<const std::uint8_t> mask, std::size_t height, std::size_t width,
                                        std::size_t k) {
    if (k % 2 == 0) throw ContractError("dilation kernel must be odd");
    const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(k / 2);
    const auto H = static_cast<std::ptrdiff_t>(height), W = static_cast<std::ptrdiff_t>(width);
    // Separable: rows then columns.
    std::vector<std::uint8_t> tmp(mask.size(), 0), out(mask.size(), 0);
    for (std::ptrdiff_t h = 0; h < H; ++h) {
        for (std::ptrdiff_t w = 0; w < W; ++w) {
            for (std::ptrdiff_t d = std::max<std::ptrdiff_t>(0, w - r); d <= std::min(W - 1, w + r); ++d) {
                if (mask[h * W + d]) {
                    tmp[h * W + w] = 1;
                    break;
                }
            }
        }
    }
    for (std::ptrdiff_t h = 0; h < H; ++h) {
        for (std::ptrdiff_t w = 0; w < W; ++w) {
            for (std::ptrdiff_t d = std::max<std::ptrdiff_t>(0, h - r); d <= std::min(H - 1, h + r); ++d) {
                if (tmp[d * W + w]) {
                    out[h * W + w] = 1;
                    break;
                }
            }
        }
    }
    return out;
}

GeneratedClick generate_click_classification(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt,
                                             std::size_t height, std::size_t width, bool binary,
                                             std::uint8_t ignore) {
    const std::size_t hw = height * width;
    if (pred.size() != hw || gt.size() != hw) throw DimensionError("click generation: maps do not match H x W");
    int max_class = -1;
    for (std::size_t i = 0; i < hw; ++i) {
        if (gt[i] != ignore) max_class = std::max<int>(max_class, gt[i]);
    }
    Peak best;
    int best_class = -1;
    std::vector<std::uint8_t> best_mask;
    std::vector<std::uint8_t> xi(hw);
    for (int c = 0; c <= max_class; ++c) {
        bool any = false;
        for (std::size_t i = 0; i < hw; ++i) {
            xi[i] = gt[i] != ignore && gt[i] == c && pred[i] != gt[i];
            any = any || xi[i];
        }
        if (!any) continue;
        const Peak p = deepest(xi, height, width);
        if (p.depth > best.depth) {
            best = p;
            best_class = c;
            best_mask = xi;
        }
    }
    if (best_class < 0) return GeneratedClick{true, {}};
    const int u = static_cast<int>(best.index / width), v = static_cast<int>(best.index % width);
    Click click{u, v, component_radius(best_mask, height, width, u, v), 0.0};
    click.label = binary ? (gt[best.index] == 1 ? 1.0 : -1.0) : static_cast<double>(gt[best.index]);
    return GeneratedClick{false, click};
}

GeneratedClick generate_click_regression(std::span<const double> pred, std::span<const double> gt,
                                         std::span<const std::uint8_t> valid, std::size_t height, std::size_t width,
                                         double tolerance, std::size_t dilation) {
    const std::size_t hw = height * width;
    if (pred.size() != hw || gt.size() != hw || (!valid.empty() && valid.size() != hw)) {
        throw DimensionError("click generation: maps do not match H x W");
    }
    auto is_valid = [&](std::size_t i) { return valid.empty() || valid[i] != 0; };
    std::vector<double> abs_err;
    double worst = 0.0;
    for (std::size_t i = 0; i < hw; ++i) {
        if (!is_valid(i)) continue;
        abs_err.push_back(std::abs(pred[i] - gt[i]));
        worst = std::max(worst, abs_err.back());
    }
    if (abs_err.empty()) throw ContractError("click generation: no valid pixels");
    if (worst <= tolerance) return GeneratedClick{true, {}};

    std::vector<std::uint8_t> pos(hw, 0), neg(hw, 0);
    const auto [mn, mx] = std::minmax_element(abs_err.begin(), abs_err.end());
    const bool constant = !(*mx > *mn);
    const OtsuResult otsu = constant ? OtsuResult{} : otsu_threshold(abs_err);
    for (std::size_t i = 0; i < hw; ++i) {
        if (!is_valid(i)) continue;
        const double e = pred[i] - gt[i];
        if (e == 0.0) continue;
        if (!constant && otsu_bin(std::abs(e), otsu.lo, otsu.hi) < otsu.bin) continue;
        (e > 0 ? pos : neg)[i] = 1;
    }
    const Peak p_pos = deepest(pos, height, width), p_neg = deepest(neg, height, width);
    const bool use_pos = p_pos.depth >= p_neg.depth;
    const Peak best = use_pos ? p_pos : p_neg;
    const auto& chosen = use_pos ? pos : neg;
    const int u = static_cast<int>(best.index / width), v = static_cast<int>(best.index % width);
    const auto dilated = dilate_square(chosen, height, width, dilation);
    return GeneratedClick{false, Click{u, v, component_radius(dilated, height, width, u, v), gt[best.index]}};
}

} // namespace gbrs
