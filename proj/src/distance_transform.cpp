#include "gbrs/distance_transform.hpp"

#include "gbrs/errors.hpp"

#include <cmath>
#include <limits>

namespace gbrs {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// One-dimensional pass: d[q] = min_p (q - p)^2 + f[p] over finite f[p].
// Indices are offset by `origin` so that virtual border seeds can sit at -1 and n.
void envelope_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<long>& sites,
                 std::vector<double>& bounds, long origin, std::size_t out_count) {
    sites.clear();
    bounds.clear();
    const long n = static_cast<long>(f.size());
    for (long q = 0; q < n; ++q) {
        if (!std::isfinite(f[q])) continue;
        const double fq = f[q] + static_cast<double>(q) * static_cast<double>(q);
        while (!sites.empty()) {
            const long v = sites.back();
            const double fv = f[v] + static_cast<double>(v) * static_cast<double>(v);
            const double s = (fq - fv) / (2.0 * static_cast<double>(q - v));
            if (s <= bounds.back()) {
                sites.pop_back();
                bounds.pop_back();
            } else {
                sites.push_back(q);
                bounds.push_back(s);
                break;
            }
        }
        if (sites.empty()) {
            sites.push_back(q);
            bounds.push_back(-kInf);
        }
    }
    d.assign(out_count, kInf);
    if (sites.empty()) return;
    std::size_t k = 0;
    for (std::size_t i = 0; i < out_count; ++i) {
        const long q = static_cast<long>(i) + origin;
        while (k + 1 < sites.size() && bounds[k + 1] < static_cast<double>(q)) ++k;
        const double diff = static_cast<double>(q - sites[k]);
        d[i] = diff * diff + f[sites[k]];
    }
}

} // namespace

std::vector<double> squared_distance_to_seeds(std::span<const std::uint8_t> seeds, std::size_t height,
                                              std::size_t width, bool border_seeds) {
    if (seeds.size() != height * width) throw DimensionError("distance transform: mask size mismatch");
    const long pad = border_seeds ? 1 : 0;
    std::vector<double> column_pass(height * width);
    std::vector<double> f, d, bounds;
    std::vector<long> sites;

    for (std::size_t w = 0; w < width; ++w) {
        f.assign(height + 2 * pad, kInf);
        if (border_seeds) {
            f.front() = 0.0;
            f.back() = 0.0;
        }
        for (std::size_t h = 0; h < height; ++h) {
            if (seeds[h * width + w]) f[h + pad] = 0.0;
        }
        envelope_1d(f, d, sites, bounds, pad, height);
        for (std::size_t h = 0; h < height; ++h) column_pass[h * width + w] = d[h];
    }

    std::vector<double> result(height * width);
    for (std::size_t h = 0; h < height; ++h) {
        f.assign(width + 2 * pad, kInf);
        if (border_seeds) {
            f.front() = 0.0;
            f.back() = 0.0;
        }
        for (std::size_t w = 0; w < width; ++w) f[w + pad] = column_pass[h * width + w];
        // Virtual border columns are seeds on every row.
        envelope_1d(f, d, sites, bounds, pad, width);
        for (std::size_t w = 0; w < width; ++w) result[h * width + w] = d[w];
    }
    return result;
}

std::vector<double> distance_transform(std::span<const std::uint8_t> mask, std::size_t height, std::size_t width) {
    std::vector<std::uint8_t> seeds(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) seeds[i] = mask[i] ? 0 : 1;
    std::vector<double> sq = squared_distance_to_seeds(seeds, height, width, true);
    for (auto& v : sq) v = std::sqrt(v);
    return sq;
}

} // namespace gbrs
