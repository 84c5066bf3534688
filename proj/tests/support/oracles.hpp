#pragma once

// Slow reference implementations. Each one recomputes its answer by
// exhaustive search so it shares no code path with the library.

#include "gbrs/click.hpp"
#include "gbrs/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <vector>

namespace gbrs::oracle {

/// Distance from each 1-pixel to the nearest 0-pixel or off-image pixel, by
/// scanning every candidate.
inline std::vector<double> distance_transform(const std::vector<std::uint8_t>& mask, int h, int w) {
    std::vector<double> out(mask.size(), 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!mask[y * w + x]) continue;
            long best = std::numeric_limits<long>::max();
            for (int yy = -1; yy <= h; ++yy) {
                for (int xx = -1; xx <= w; ++xx) {
                    const bool zero = yy < 0 || xx < 0 || yy >= h || xx >= w || !mask[yy * w + xx];
                    if (zero) best = std::min<long>(best, long(y - yy) * (y - yy) + long(x - xx) * (x - xx));
                }
            }
            out[y * w + x] = std::sqrt(double(best));
        }
    }
    return out;
}

inline std::size_t bin_of(double v, double lo, double hi) {
    const double t = std::floor((v - lo) / (hi - lo) * 256.0);
    if (t < 0) return 0;
    return t > 255 ? 255 : std::size_t(t);
}

/// Otsu split by trying every cut k in 1..255 and partitioning the raw
/// values for each one. Returns the first bin of the upper class.
inline std::size_t otsu_bin(const std::vector<double>& values) {
    const double lo = *std::min_element(values.begin(), values.end());
    const double hi = *std::max_element(values.begin(), values.end());
    std::size_t best_k = 0;
    __int128 bn = 0, bd = 1;
    for (std::size_t k = 1; k < 256; ++k) {
        __int128 n0 = 0, n1 = 0, s0 = 0, s1 = 0;
        for (double v : values) {
            const std::size_t b = bin_of(v, lo, hi);
            if (b < k) {
                ++n0;
                s0 += b;
            } else {
                ++n1;
                s1 += b;
            }
        }
        if (n0 == 0 || n1 == 0) continue;
        // n0 n1 (mu0 - mu1)^2 = (s0 n1 - s1 n0)^2 / (n0 n1)
        __int128 d = s0 * n1 - s1 * n0;
        if (d < 0) d = -d;
        const __int128 num = d * d, den = n0 * n1;
        if (best_k == 0 || num * bd > bn * den) {
            bn = num;
            bd = den;
            best_k = k;
        }
    }
    return best_k;
}

/// 4-connected component by repeated relaxation until nothing changes.
inline std::vector<std::uint8_t> component(const std::vector<std::uint8_t>& mask, int h, int w, int u, int v) {
    std::vector<std::uint8_t> in(mask.size(), 0);
    in[u * w + v] = 1;
    for (bool grew = true; grew;) {
        grew = false;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                if (in[y * w + x] || !mask[y * w + x]) continue;
                const bool touch = (y > 0 && in[(y - 1) * w + x]) || (y + 1 < h && in[(y + 1) * w + x]) ||
                                   (x > 0 && in[y * w + x - 1]) || (x + 1 < w && in[y * w + x + 1]);
                if (touch) {
                    in[y * w + x] = 1;
                    grew = true;
                }
            }
        }
    }
    return in;
}

/// Farthest boundary pixel of the component at (u, v), at least 1.
inline double radius(const std::vector<std::uint8_t>& mask, int h, int w, int u, int v) {
    const auto in = component(mask, h, w, u, v);
    auto inside = [&](int y, int x) { return y >= 0 && x >= 0 && y < h && x < w && in[y * w + x]; };
    // Integer squared distance, one sqrt: exact, unlike hypot.
    long best = 0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!in[y * w + x]) continue;
            if (inside(y - 1, x) && inside(y + 1, x) && inside(y, x - 1) && inside(y, x + 1)) continue;
            best = std::max(best, long(y - u) * (y - u) + long(x - v) * (x - v));
        }
    }
    return std::max(std::sqrt(double(best)), 1.0);
}

/// k x k window maximum evaluated directly.
inline std::vector<std::uint8_t> dilate(const std::vector<std::uint8_t>& mask, int h, int w, int k) {
    const int r = k / 2;
    std::vector<std::uint8_t> out(mask.size(), 0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int yy = std::max(0, y - r); yy <= std::min(h - 1, y + r) && !out[y * w + x]; ++yy) {
                for (int xx = std::max(0, x - r); xx <= std::min(w - 1, x + r); ++xx) {
                    if (mask[yy * w + xx]) {
                        out[y * w + x] = 1;
                        break;
                    }
                }
            }
        }
    }
    return out;
}

struct Peak {
    double depth = 0;
    int index = -1;
};

inline Peak deepest(const std::vector<std::uint8_t>& mask, int h, int w) {
    const auto d = distance_transform(mask, h, w);
    Peak p;
    for (int i = 0; i < h * w; ++i) {
        if (d[i] > p.depth) p = Peak{d[i], i};
    }
    return p;
}

/// Next click for a class map; empty when nothing is wrong.
inline std::optional<Click> click_classification(const std::vector<std::uint8_t>& pred,
                                                 const std::vector<std::uint8_t>& gt, int h, int w, bool binary) {
    Peak best;
    std::vector<std::uint8_t> best_mask;
    for (int c = 0; c < 255; ++c) {
        std::vector<std::uint8_t> err(gt.size(), 0);
        for (std::size_t i = 0; i < gt.size(); ++i) err[i] = gt[i] == c && pred[i] != c;
        const Peak p = deepest(err, h, w);
        if (p.index >= 0 && p.depth > best.depth) {
            best = p;
            best_mask = err;
        }
    }
    if (best.index < 0) return std::nullopt;
    const int u = best.index / w, v = best.index % w;
    const double label = binary ? (gt[best.index] == 1 ? 1.0 : -1.0) : double(gt[best.index]);
    return Click{u, v, radius(best_mask, h, w, u, v), label};
}

/// Next click for a continuous map; empty when within tolerance.
inline std::optional<Click> click_regression(const std::vector<double>& pred, const std::vector<double>& gt, int h,
                                             int w, double tolerance, int dilation) {
    std::vector<double> err(pred.size());
    double worst = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        err[i] = std::abs(pred[i] - gt[i]);
        worst = std::max(worst, err[i]);
    }
    if (worst <= tolerance) return std::nullopt;
    const double lo = *std::min_element(err.begin(), err.end());
    const double hi = *std::max_element(err.begin(), err.end());
    const bool constant = !(hi > lo);
    const std::size_t k = constant ? 0 : otsu_bin(err);
    std::vector<std::uint8_t> pos(pred.size(), 0), neg(pred.size(), 0);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double e = pred[i] - gt[i];
        if (e == 0.0) continue;
        if (!constant && bin_of(err[i], lo, hi) < k) continue;
        (e > 0 ? pos : neg)[i] = 1;
    }
    const Peak pp = deepest(pos, h, w), pn = deepest(neg, h, w);
    const bool use_pos = pp.depth >= pn.depth;
    const Peak best = use_pos ? pp : pn;
    const int u = best.index / w, v = best.index % w;
    return Click{u, v, radius(dilate(use_pos ? pos : neg, h, w, dilation), h, w, u, v), gt[best.index]};
}

/// Channels ranked by pairwise comparison of their means: channel c is kept
/// when fewer than k channels beat it (higher mean, or equal mean and lower index).
inline std::vector<std::size_t> top_k(const Tensor& m, std::size_t k) {
    const std::size_t c = m.dim(1), hw = m.dim(2) * m.dim(3);
    std::vector<double> mean(c, 0.0);
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t i = 0; i < hw; ++i) mean[ch] += m[ch * hw + i];
        mean[ch] /= double(hw);
    }
    std::vector<std::size_t> out;
    for (std::size_t ch = 0; ch < c; ++ch) {
        std::size_t beaten = 0;
        for (std::size_t j = 0; j < c; ++j) beaten += mean[j] > mean[ch] || (mean[j] == mean[ch] && j < ch);
        if (beaten < k) out.push_back(ch);
    }
    return out;
}

/// Random blobby mask: a union of a few random rectangles and disks.
inline std::vector<std::uint8_t> random_blobs(int h, int w, std::mt19937_64& rng, int max_blobs = 4) {
    std::vector<std::uint8_t> m(h * w, 0);
    const int n = 1 + int(rng() % max_blobs);
    for (int b = 0; b < n; ++b) {
        const int cy = int(rng() % h), cx = int(rng() % w);
        const int ry = 1 + int(rng() % std::max(1, h / 3)), rx = 1 + int(rng() % std::max(1, w / 3));
        const bool disk = rng() % 2;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double dy = double(y - cy) / ry, dx = double(x - cx) / rx;
                if (disk ? dy * dy + dx * dx <= 1.0 : std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0) m[y * w + x] = 1;
            }
        }
    }
    return m;
}

} // namespace gbrs::oracle
