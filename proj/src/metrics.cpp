#include "gbrs/metrics.hpp"

#include "gbrs/errors.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace gbrs {

namespace {

constexpr double kGradSigma = 1.4;

// Gaussian and first-derivative-of-Gaussian kernels, each normalised so that
// the derivative kernel has unit response to a unit ramp.
void gaussian_kernels(std::vector<double>& g, std::vector<double>& dg) {
    const int r = static_cast<int>(std::ceil(3.0 * kGradSigma));
    g.assign(2 * r + 1, 0.0);
    dg.assign(2 * r + 1, 0.0);
    double gs = 0.0, ds = 0.0;
    for (int i = -r; i <= r; ++i) {
        g[i + r] = std::exp(-0.5 * i * i / (kGradSigma * kGradSigma));
        gs += g[i + r];
    }
    for (auto& v : g) v /= gs;
    for (int i = -r; i <= r; ++i) {
        dg[i + r] = -i * g[i + r];
        ds += -i * dg[i + r];
    }
    for (auto& v : dg) v /= ds;
}

// Correlation along one axis with replicated borders.
std::vector<double> filter(const std::vector<double>& src, std::size_t h, std::size_t w, const std::vector<double>& k,
                           bool along_rows) {
    const int r = static_cast<int>(k.size() / 2);
    std::vector<double> out(src.size(), 0.0);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -r; i <= r; ++i) {
                const int yy = along_rows ? static_cast<int>(y) : std::clamp(static_cast<int>(y) + i, 0, int(h) - 1);
                const int xx = along_rows ? std::clamp(static_cast<int>(x) + i, 0, int(w) - 1) : static_cast<int>(x);
                acc += k[i + r] * src[static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx)];
            }
            out[y * w + x] = acc;
        }
    }
    return out;
}

std::vector<double> gradient_magnitude(std::span<const double> img, std::size_t h, std::size_t w) {
    std::vector<double> g, dg;
    gaussian_kernels(g, dg);
    const std::vector<double> src(img.begin(), img.end());
    const auto gx = filter(filter(src, h, w, dg, true), h, w, g, false);
    const auto gy = filter(filter(src, h, w, g, true), h, w, dg, false);
    std::vector<double> mag(src.size());
    for (std::size_t i = 0; i < mag.size(); ++i) mag[i] = std::sqrt(gx[i] * gx[i] + gy[i] * gy[i]);
    return mag;
}

// Largest 4-connected component of `mask`; the first found wins ties.
std::vector<std::uint8_t> largest_component(const std::vector<std::uint8_t>& mask, std::size_t h, std::size_t w) {
    std::vector<int> label(mask.size(), -1);
    std::vector<std::size_t> sizes;
    for (std::size_t s = 0; s < mask.size(); ++s) {
        if (!mask[s] || label[s] >= 0) continue;
        const int id = static_cast<int>(sizes.size());
        std::size_t count = 0;
        std::deque<std::size_t> q{s};
        label[s] = id;
        while (!q.empty()) {
            const std::size_t i = q.front();
            q.pop_front();
            ++count;
            const std::size_t y = i / w, x = i % w;
            auto visit = [&](std::size_t j) {
                if (mask[j] && label[j] < 0) {
                    label[j] = id;
                    q.push_back(j);
                }
            };
            if (y > 0) visit(i - w);
            if (y + 1 < h) visit(i + w);
            if (x > 0) visit(i - 1);
            if (x + 1 < w) visit(i + 1);
        }
        sizes.push_back(count);
    }
    std::vector<std::uint8_t> out(mask.size(), 0);
    if (sizes.empty()) return out;
    const int best = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
    for (std::size_t i = 0; i < mask.size(); ++i) out[i] = label[i] == best;
    return out;
}

} // namespace

double metric_iou(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt) {
    if (pred.size() != gt.size()) throw DimensionError("iou: masks differ in size");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] != 0, g = gt[i] != 0;
        inter += p && g;
        uni += p || g;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double metric_miou(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt, std::uint8_t ignore) {
    if (pred.size() != gt.size()) throw DimensionError("miou: maps differ in size");
    std::vector<std::size_t> inter(256, 0), uni(256, 0);
    std::vector<std::uint8_t> present(256, 0);
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if (gt[i] == ignore) continue;
        present[gt[i]] = 1;
        if (pred[i] == gt[i]) {
            ++inter[gt[i]];
            ++uni[gt[i]];
        } else {
            ++uni[gt[i]];
            ++uni[pred[i]];
        }
    }
    double total = 0.0;
    std::size_t classes = 0;
    for (std::size_t c = 0; c < 256; ++c) {
        if (!present[c]) continue;
        total += static_cast<double>(inter[c]) / static_cast<double>(uni[c]);
        ++classes;
    }
    return classes == 0 ? 1.0 : total / static_cast<double>(classes);
}

double metric_pixel_accuracy(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt,
                             std::uint8_t ignore) {
    if (pred.size() != gt.size()) throw DimensionError("pixel accuracy: maps differ in size");
    std::size_t ok = 0, n = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if (gt[i] == ignore) continue;
        ok += pred[i] == gt[i];
        ++n;
    }
    return n == 0 ? 1.0 : static_cast<double>(ok) / static_cast<double>(n);
}

MattingMetrics metric_matting(std::span<const double> pred, std::span<const double> gt, std::size_t height,
                              std::size_t width) {
    const std::size_t n = height * width;
    if (pred.size() != n || gt.size() != n) throw DimensionError("matting metrics: maps do not match H x W");
    for (std::size_t i = 0; i < n; ++i) {
        if (!(pred[i] >= 0.0 && pred[i] <= 1.0) || !(gt[i] >= 0.0 && gt[i] <= 1.0)) {
            throw InputError("alpha values must lie in [0,1]");
        }
    }
    MattingMetrics m;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = pred[i] - gt[i];
        m.sad += std::abs(d);
        m.mse += d * d;
    }
    m.mse /= static_cast<double>(n);

    const auto gp = gradient_magnitude(pred, height, width), gg = gradient_magnitude(gt, height, width);
    for (std::size_t i = 0; i < n; ++i) m.grad += (gp[i] - gg[i]) * (gp[i] - gg[i]);

    constexpr double step = 0.1;
    std::vector<double> level(n, -1.0);
    std::vector<std::uint8_t> both(n);
    for (int k = 1; k <= 10; ++k) {
        const double t = k * step;
        for (std::size_t i = 0; i < n; ++i) both[i] = pred[i] >= t && gt[i] >= t;
        const auto omega = largest_component(both, height, width);
        for (std::size_t i = 0; i < n; ++i) {
            if (level[i] == -1.0 && !omega[i]) level[i] = (k - 1) * step;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (level[i] == -1.0) level[i] = 1.0;
        const double dp = pred[i] - level[i], dg = gt[i] - level[i];
        const double phi_p = 1.0 - dp * (dp >= 0.15 ? 1.0 : 0.0);
        const double phi_g = 1.0 - dg * (dg >= 0.15 ? 1.0 : 0.0);
        m.conn += std::abs(phi_p - phi_g);
    }
    return m;
}

DepthMetrics metric_depth(std::span<const double> pred, std::span<const double> gt, std::span<const std::uint8_t> valid) {
    if (pred.size() != gt.size() || (!valid.empty() && valid.size() != gt.size())) {
        throw DimensionError("depth metrics: maps differ in size");
    }
    DepthMetrics m;
    std::size_t n = 0;
    double sq = 0.0, sq_log = 0.0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if (!valid.empty() && !valid[i]) continue;
        const double p = pred[i], g = gt[i];
        if (!(p > 0.0) || !(g > 0.0)) throw InputError("depth must be positive on valid pixels");
        const double ratio = std::max(p / g, g / p);
        m.delta1 += ratio < 1.25;
        m.delta2 += ratio < 1.25 * 1.25;
        m.delta3 += ratio < 1.25 * 1.25 * 1.25;
        m.abs_rel += std::abs(p - g) / g;
        m.sq_rel += (p - g) * (p - g) / g;
        sq += (p - g) * (p - g);
        sq_log += (std::log(p) - std::log(g)) * (std::log(p) - std::log(g));
        ++n;
    }
    if (n == 0) throw ContractError("depth metrics: no valid pixels");
    const double dn = static_cast<double>(n);
    m.delta1 /= dn;
    m.delta2 /= dn;
    m.delta3 /= dn;
    m.abs_rel /= dn;
    m.sq_rel /= dn;
    m.rmse = std::sqrt(sq / dn);
    m.rmse_log = std::sqrt(sq_log / dn);
    return m;
}

double auc_over_clicks(std::span<const double> series) {
    if (series.size() < 2) throw ContractError("AUC needs at least clicks 0 and 1");
    double acc = 0.0;
    for (std::size_t k = 1; k < series.size(); ++k) acc += 0.5 * (series[k - 1] + series[k]);
    return acc / static_cast<double>(series.size() - 1);
}

} // namespace gbrs
