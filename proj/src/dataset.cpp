#include "gbrs/dataset.hpp"

#include "gbrs/errors.hpp"
#include "gbrs/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>

namespace gbrs {

namespace {

constexpr double kAlphaSigma = 1.5;
constexpr int kBlurRadius = 5;

struct Palette {
    std::array<double, 3> rgb;
};

const std::array<Palette, 6> kPalette = {{
    {{0.0, 0.0, 0.0}},
    {{0.85, 0.15, 0.15}},
    {{0.15, 0.75, 0.2}},
    {{0.15, 0.25, 0.85}},
    {{0.9, 0.85, 0.15}},
    {{0.8, 0.2, 0.8}},
}};

using Mask = std::vector<std::uint8_t>;

// Integer-only rasterisers; the geometry is bit-identical everywhere.
Mask raster_ellipse(int h, int w, int cy, int cx, int a, int b) {
    Mask m(static_cast<std::size_t>(h * w), 0);
    const std::int64_t aa = std::int64_t{a} * a, bb = std::int64_t{b} * b;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::int64_t dy = y - cy, dx = x - cx;
            if (dy * dy * bb + dx * dx * aa <= aa * bb) m[y * w + x] = 1;
        }
    }
    return m;
}

Mask raster_rectangle(int h, int w, int y0, int x0, int y1, int x1) {
    Mask m(static_cast<std::size_t>(h * w), 0);
    for (int y = std::max(0, y0); y <= std::min(h - 1, y1); ++y) {
        for (int x = std::max(0, x0); x <= std::min(w - 1, x1); ++x) m[y * w + x] = 1;
    }
    return m;
}

Mask raster_triangle(int h, int w, const std::array<std::array<int, 2>, 3>& p) {
    Mask m(static_cast<std::size_t>(h * w), 0);
    auto edge = [](const std::array<int, 2>& a, const std::array<int, 2>& b, int y, int x) {
        return std::int64_t{b[1] - a[1]} * (y - a[0]) - std::int64_t{b[0] - a[0]} * (x - a[1]);
    };
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const auto e0 = edge(p[0], p[1], y, x), e1 = edge(p[1], p[2], y, x), e2 = edge(p[2], p[0], y, x);
            if ((e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0)) m[y * w + x] = 1;
        }
    }
    return m;
}

std::vector<double> gaussian_kernel() {
    std::vector<double> k(2 * kBlurRadius + 1);
    double total = 0.0;
    for (int i = -kBlurRadius; i <= kBlurRadius; ++i) {
        k[i + kBlurRadius] = std::exp(-0.5 * i * i / (kAlphaSigma * kAlphaSigma));
        total += k[i + kBlurRadius];
    }
    for (auto& v : k) v /= total;
    return k;
}

// Separable blur with replicated borders.
std::vector<double> blur(const std::vector<double>& src, int h, int w) {
    static const std::vector<double> k = gaussian_kernel();
    std::vector<double> tmp(src.size(), 0.0), out(src.size(), 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -kBlurRadius; i <= kBlurRadius; ++i) {
                acc += k[i + kBlurRadius] * src[y * w + std::clamp(x + i, 0, w - 1)];
            }
            tmp[y * w + x] = acc;
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -kBlurRadius; i <= kBlurRadius; ++i) {
                acc += k[i + kBlurRadius] * tmp[std::clamp(y + i, 0, h - 1) * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    return out;
}

Mask draw_shape(Rng& rng, ShapeKind kind, int size) {
    const int lo = size / 8, hi = size - 1 - size / 8;
    const int cy = static_cast<int>(rng.uniform_int(lo, hi));
    const int cx = static_cast<int>(rng.uniform_int(lo, hi));
    const int rmin = std::max(3, size / 12), rmax = size / 4;
    switch (kind) {
    case ShapeKind::ellipse: {
        const int a = static_cast<int>(rng.uniform_int(rmin, rmax));
        const int b = static_cast<int>(rng.uniform_int(rmin, rmax));
        return raster_ellipse(size, size, cy, cx, a, b);
    }
    case ShapeKind::rectangle: {
        const int a = static_cast<int>(rng.uniform_int(rmin, rmax));
        const int b = static_cast<int>(rng.uniform_int(rmin, rmax));
        return raster_rectangle(size, size, cy - a, cx - b, cy + a, cx + b);
    }
    case ShapeKind::triangle:
        break;
    }
    std::array<std::array<int, 2>, 3> p{};
    for (;;) {
        for (auto& q : p) {
            q[0] = cy + static_cast<int>(rng.uniform_int(-rmax, rmax));
            q[1] = cx + static_cast<int>(rng.uniform_int(-rmax, rmax));
        }
        const std::int64_t area2 = std::int64_t{p[1][1] - p[0][1]} * (p[2][0] - p[0][0]) -
                                   std::int64_t{p[1][0] - p[0][0]} * (p[2][1] - p[0][1]);
        if (std::llabs(area2) >= std::int64_t{rmin} * rmin * 4) break;
    }
    return raster_triangle(size, size, p);
}

void write_pgm16(const std::filesystem::path& path, std::size_t h, std::size_t w,
                 const std::vector<std::uint16_t>& values) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    out << "P5\n" << w << " " << h << "\n65535\n";
    for (auto v : values) {
        const char bytes[2] = {static_cast<char>(v >> 8), static_cast<char>(v & 0xff)};
        out.write(bytes, 2);
    }
}

std::uint16_t to_u16(double v) { return static_cast<std::uint16_t>(std::clamp(std::lround(v), 0L, 65535L)); }

} // namespace

ShapeKind shape_kind_for_class(int class_id) {
    switch (class_id) {
    case 1:
    case 5: return ShapeKind::ellipse;
    case 2:
    case 4: return ShapeKind::rectangle;
    case 3: return ShapeKind::triangle;
    default: throw ContractError("no shape for class " + std::to_string(class_id));
    }
}

Sample generate_sample(std::size_t size_in, std::uint64_t seed, std::size_t index, DatasetStyle style) {
    if (size_in != 64 && size_in != 96 && size_in != 128) {
        throw ContractError("dataset size must be 64, 96 or 128, got " + std::to_string(size_in));
    }
    const int size = static_cast<int>(size_in);
    const std::size_t hw = size_in * size_in;
    Rng rng = Rng::derive(seed, index, style == DatasetStyle::standard ? 0x5ca1ab1e : 0x5ca1ab1f);
    const bool shifted = style == DatasetStyle::shifted;

    // Background: grey-ish linear gradient in a random direction.
    std::array<double, 3> c0{}, c1{};
    const double base0 = rng.uniform(0.35, 0.65), base1 = rng.uniform(0.35, 0.65);
    const double tint = shifted ? 0.3 : 0.05;
    for (int c = 0; c < 3; ++c) {
        c0[c] = std::clamp(base0 + rng.uniform(-tint, tint), 0.0, 1.0);
        c1[c] = std::clamp(base1 + rng.uniform(-tint, tint), 0.0, 1.0);
    }
    const int direction = static_cast<int>(rng.uniform_int(0, 2));

    const int shapes = static_cast<int>(rng.uniform_int(2, 5));
    const double jitter = shifted ? 0.25 : 0.07;
    std::vector<std::uint8_t> classes(hw, 0);
    std::vector<int> instance(hw, -1);
    std::vector<std::array<double, 3>> colours;
    std::vector<double> depths;
    for (int s = 0; s < shapes; ++s) {
        const int cls = static_cast<int>(rng.uniform_int(1, 5));
        Mask m = draw_shape(rng, shape_kind_for_class(cls), size);
        std::array<double, 3> colour{};
        for (int c = 0; c < 3; ++c) {
            colour[c] = std::clamp(kPalette[cls].rgb[c] + rng.uniform(-jitter, jitter), 0.0, 1.0);
        }
        std::size_t area = 0;
        for (std::size_t i = 0; i < hw; ++i) {
            if (m[i]) {
                classes[i] = static_cast<std::uint8_t>(cls);
                instance[i] = s;
                ++area;
            }
        }
        // Bigger shapes sit closer.
        const double frac = std::min(1.0, static_cast<double>(area) / (0.15 * static_cast<double>(hw)));
        depths.push_back(std::clamp(3.5 - 3.0 * frac + rng.uniform(-0.3, 0.3), 0.5, 3.5));
        colours.push_back(colour);
    }

    Sample out;
    out.height = out.width = size_in;
    out.gt_classes = classes;

    std::vector<double> union_mask(hw, 0.0);
    std::array<std::vector<double>, 3> painted;
    for (auto& p : painted) p.assign(hw, 0.0);
    std::vector<std::size_t> counts(static_cast<std::size_t>(shapes), 0);
    for (std::size_t i = 0; i < hw; ++i) {
        if (instance[i] < 0) continue;
        union_mask[i] = 1.0;
        for (int c = 0; c < 3; ++c) painted[c][i] = colours[instance[i]][c];
        ++counts[static_cast<std::size_t>(instance[i])];
    }
    std::vector<double> alpha = blur(union_mask, size, size);
    for (auto& a : alpha) {
        if (a > 1.0 - 1e-9) a = 1.0;
        if (a < 1e-9) a = 0.0;
    }
    out.gt_alpha = Tensor(Shape{size_in, size_in}, alpha);

    out.image = Tensor(Shape{3, size_in, size_in});
    for (int c = 0; c < 3; ++c) {
        const std::vector<double> fg = blur(painted[c], size, size);
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                const double t = direction == 0   ? y / double(size - 1)
                                 : direction == 1 ? x / double(size - 1)
                                                  : (x + y) / double(2 * size - 2);
                const double bg = c0[c] + (c1[c] - c0[c]) * t;
                const std::size_t i = static_cast<std::size_t>(y * size + x);
                const double noise = shifted ? 0.04 * rng.normal() : 0.0;
                out.image[c * hw + i] = std::clamp(bg * (1.0 - alpha[i]) + fg[i] + noise, 0.0, 1.0);
            }
        }
    }

    out.gt_depth = Tensor(Shape{size_in, size_in});
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const std::size_t i = static_cast<std::size_t>(y * size + x);
            out.gt_depth[i] = instance[i] >= 0 ? depths[instance[i]] : 8.0 - 4.0 * y / double(size - 1);
        }
    }

    // Largest visible instance; ties go to the lower index.
    const auto largest = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    out.gt_binary.assign(hw, 0);
    for (std::size_t i = 0; i < hw; ++i) out.gt_binary[i] = instance[i] == largest ? 1 : 0;

    std::vector<std::uint8_t> band(hw, 0);
    for (std::size_t i = 0; i < hw; ++i) band[i] = alpha[i] > 0.05 && alpha[i] < 0.95;
    out.trimap = Tensor(Shape{size_in, size_in});
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            bool unsure = false;
            for (int dy = -2; dy <= 2 && !unsure; ++dy) {
                for (int dx = -2; dx <= 2 && !unsure; ++dx) {
                    const int yy = y + dy, xx = x + dx;
                    if (yy >= 0 && yy < size && xx >= 0 && xx < size && band[yy * size + xx]) unsure = true;
                }
            }
            const std::size_t i = static_cast<std::size_t>(y * size + x);
            out.trimap[i] = unsure ? 0.5 : (alpha[i] >= 0.95 ? 1.0 : 0.0);
        }
    }
    return out;
}

std::vector<Sample> generate_dataset(std::size_t n, std::size_t size, std::uint64_t seed, DatasetStyle style) {
    std::vector<Sample> samples;
    samples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) samples.push_back(generate_sample(size, seed, i, style));
    return samples;
}

void export_dataset(const std::vector<Sample>& samples, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream manifest(dir / "manifest.txt");
    if (!manifest) throw InputError("cannot write manifest in " + dir.string());
    manifest << "# index image alpha depth_mm classes binary trimap\n";
    for (std::size_t k = 0; k < samples.size(); ++k) {
        const Sample& s = samples[k];
        const std::size_t hw = s.height * s.width;
        const std::string stem = "sample_" + std::to_string(k);
        {
            std::ofstream out(dir / (stem + ".ppm"), std::ios::binary);
            if (!out) throw InputError("cannot write image for sample " + std::to_string(k));
            out << "P6\n" << s.width << " " << s.height << "\n255\n";
            for (std::size_t i = 0; i < hw; ++i) {
                for (std::size_t c = 0; c < 3; ++c) {
                    out.put(static_cast<char>(std::lround(std::clamp(s.image[c * hw + i], 0.0, 1.0) * 255.0)));
                }
            }
        }
        std::vector<std::uint16_t> buf(hw);
        for (std::size_t i = 0; i < hw; ++i) buf[i] = to_u16(s.gt_alpha[i] * 65535.0);
        write_pgm16(dir / (stem + "_alpha.pgm"), s.height, s.width, buf);
        for (std::size_t i = 0; i < hw; ++i) buf[i] = to_u16(s.gt_depth[i] * 1000.0);
        write_pgm16(dir / (stem + "_depth.pgm"), s.height, s.width, buf);
        for (std::size_t i = 0; i < hw; ++i) buf[i] = s.gt_classes[i];
        write_pgm16(dir / (stem + "_classes.pgm"), s.height, s.width, buf);
        for (std::size_t i = 0; i < hw; ++i) buf[i] = s.gt_binary[i];
        write_pgm16(dir / (stem + "_binary.pgm"), s.height, s.width, buf);
        for (std::size_t i = 0; i < hw; ++i) buf[i] = static_cast<std::uint16_t>(std::lround(s.trimap[i] * 2.0));
        write_pgm16(dir / (stem + "_trimap.pgm"), s.height, s.width, buf);
        manifest << k << " " << stem << ".ppm " << stem << "_alpha.pgm " << stem << "_depth.pgm " << stem
                 << "_classes.pgm " << stem << "_binary.pgm " << stem << "_trimap.pgm\n";
    }
}

} // namespace gbrs
