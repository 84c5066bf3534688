#include "codec.hpp"

#include "gbrs/errors.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <sstream>

namespace gbrs::service {

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

struct Reader {
    std::string_view data;
    std::size_t pos = 0;
};

void read_cb(png_structp png, png_bytep out, png_size_t n) {
    auto* r = static_cast<Reader*>(png_get_io_ptr(png));
    if (r->pos + n > r->data.size()) png_error(png, "truncated PNG");
    std::memcpy(out, r->data.data() + r->pos, n);
    r->pos += n;
}

void write_cb(png_structp png, png_bytep in, png_size_t n) {
    static_cast<std::string*>(png_get_io_ptr(png))->append(reinterpret_cast<const char*>(in), n);
}

void flush_cb(png_structp) {}

[[noreturn]] void error_cb(png_structp, png_const_charp msg) { throw InputError(std::string("png: ") + msg); }

void warning_cb(png_structp, png_const_charp) {}

// Owns the libpng structs so exceptions thrown from callbacks release them.
struct PngWrite {
    png_structp png = nullptr;
    png_infop info = nullptr;
    PngWrite() {
        png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, error_cb, warning_cb);
        if (!png) throw Error("png: cannot create write struct");
        info = png_create_info_struct(png);
    }
    ~PngWrite() { png_destroy_write_struct(&png, &info); }
};

struct PngRead {
    png_structp png = nullptr;
    png_infop info = nullptr;
    PngRead() {
        png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, error_cb, warning_cb);
        if (!png) throw Error("png: cannot create read struct");
        info = png_create_info_struct(png);
    }
    ~PngRead() { png_destroy_read_struct(&png, &info, nullptr); }
};

bool is_png(std::string_view b) { return b.size() >= 8 && png_sig_cmp(reinterpret_cast<png_const_bytep>(b.data()), 0, 8) == 0; }

// Decodes to 16-bit samples with `channels` channels (1 = gray, 3 = RGB).
std::vector<std::uint16_t> read_png(std::string_view bytes, int channels, std::size_t& height, std::size_t& width) {
    PngRead r;
    Reader src{bytes, 0};
    png_set_read_fn(r.png, &src, read_cb);
    png_read_info(r.png, r.info);
    const int color = png_get_color_type(r.png, r.info);
    const int depth = png_get_bit_depth(r.png, r.info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(r.png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(r.png);
    if (png_get_valid(r.png, r.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(r.png);
    if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(r.png, r.info, PNG_INFO_tRNS)) png_set_strip_alpha(r.png);
    const bool gray_src = color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA;
    if (channels == 3 && gray_src) png_set_gray_to_rgb(r.png);
    if (channels == 1 && !gray_src) png_set_rgb_to_gray_fixed(r.png, 1, -1, -1);
    if (depth < 16) png_set_expand_16(r.png);
    png_set_swap(r.png); // host order for 16-bit samples (little-endian hosts)
    png_read_update_info(r.png, r.info);
    height = png_get_image_height(r.png, r.info);
    width = png_get_image_width(r.png, r.info);
    if (png_get_channels(r.png, r.info) != channels) throw InputError("png: unexpected channel layout");
    std::vector<std::uint16_t> out(height * width * static_cast<std::size_t>(channels));
    std::vector<png_bytep> rows(height);
    for (std::size_t y = 0; y < height; ++y) {
        rows[y] = reinterpret_cast<png_bytep>(out.data() + y * width * static_cast<std::size_t>(channels));
    }
    png_read_image(r.png, rows.data());
    png_read_end(r.png, nullptr);
    return out;
}

// Binary PNM (P5 / P6) with maxval up to 65535.
std::vector<double> read_pnm(std::string_view bytes, char kind, std::size_t& height, std::size_t& width) {
    std::size_t pos = 2;
    auto token = [&]() {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
                ++pos;
            } else {
                break;
            }
        }
        std::size_t start = pos;
        while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) ++pos;
        if (start == pos) throw InputError("pnm: malformed header");
        return std::stoul(std::string(bytes.substr(start, pos - start)));
    };
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != kind) throw InputError("unsupported image format");
    width = token();
    height = token();
    const std::size_t maxval = token();
    ++pos; // single whitespace before the raster
    if (maxval == 0 || maxval > 65535) throw InputError("pnm: bad maxval");
    const std::size_t channels = kind == '6' ? 3 : 1;
    const std::size_t bps = maxval > 255 ? 2 : 1;
    const std::size_t n = height * width * channels;
    if (bytes.size() < pos + n * bps) throw InputError("pnm: truncated raster");
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos + i * bps);
        const double v = bps == 2 ? double(p[0] << 8 | p[1]) : double(p[0]);
        out[i] = v / double(maxval);
    }
    return out;
}

} // namespace

std::string base64_encode(std::string_view bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    for (std::size_t i = 0; i < bytes.size(); i += 3) {
        std::uint32_t chunk = static_cast<unsigned char>(bytes[i]) << 16;
        if (i + 1 < bytes.size()) chunk |= static_cast<unsigned char>(bytes[i + 1]) << 8;
        if (i + 2 < bytes.size()) chunk |= static_cast<unsigned char>(bytes[i + 2]);
        out += kAlphabet[chunk >> 18 & 63];
        out += kAlphabet[chunk >> 12 & 63];
        out += i + 1 < bytes.size() ? kAlphabet[chunk >> 6 & 63] : '=';
        out += i + 2 < bytes.size() ? kAlphabet[chunk & 63] : '=';
    }
    return out;
}

std::string base64_decode(std::string_view text) {
    std::array<int, 256> lookup;
    lookup.fill(-1);
    for (int i = 0; i < 64; ++i) lookup[static_cast<unsigned char>(kAlphabet[i])] = i;
    std::string out;
    std::uint32_t acc = 0;
    int bits = 0;
    for (char c : text) {
        if (c == '=') break;
        if (c == '\n' || c == '\r') continue;
        const int v = lookup[static_cast<unsigned char>(c)];
        if (v < 0) throw InputError("base64: invalid character");
        acc = acc << 6 | static_cast<std::uint32_t>(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out += static_cast<char>(acc >> bits & 0xff);
        }
    }
    return out;
}

std::string encode_png_paletted(std::span<const std::uint8_t> labels, std::size_t height, std::size_t width,
                                std::span<const std::uint8_t> palette_rgb) {
    if (labels.size() != height * width) throw DimensionError("png: label map size does not match H x W");
    const std::size_t entries = palette_rgb.size() / 3;
    if (entries == 0 || entries > 256) throw ContractError("png: palette needs 1..256 entries");
    for (auto l : labels) {
        if (l >= entries) throw ContractError("png: label outside the palette");
    }
    std::string out;
    PngWrite w;
    png_set_write_fn(w.png, &out, write_cb, flush_cb);
    png_set_IHDR(w.png, w.info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
                 PNG_COLOR_TYPE_PALETTE, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    std::vector<png_color> pal(entries);
    for (std::size_t i = 0; i < entries; ++i) pal[i] = {palette_rgb[3 * i], palette_rgb[3 * i + 1], palette_rgb[3 * i + 2]};
    png_set_PLTE(w.png, w.info, pal.data(), static_cast<int>(entries));
    png_write_info(w.png, w.info);
    for (std::size_t y = 0; y < height; ++y) png_write_row(w.png, labels.data() + y * width);
    png_write_end(w.png, nullptr);
    return out;
}

Quantized encode_png_gray16(std::span<const double> values, std::size_t height, std::size_t width) {
    if (values.size() != height * width) throw DimensionError("png: map size does not match H x W");
    Quantized q;
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    q.min = values.empty() ? 0.0 : *mn;
    q.max = values.empty() ? 0.0 : *mx;
    const double span = q.max - q.min;
    std::vector<std::uint8_t> row(width * 2);
    PngWrite w;
    png_set_write_fn(w.png, &q.png, write_cb, flush_cb);
    png_set_IHDR(w.png, w.info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 16,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(w.png, w.info);
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            const double t = span > 0 ? (values[y * width + x] - q.min) / span : 0.0;
            const auto v = static_cast<std::uint16_t>(std::lround(std::clamp(t, 0.0, 1.0) * 65535.0));
            row[2 * x] = static_cast<std::uint8_t>(v >> 8); // PNG stores big-endian
            row[2 * x + 1] = static_cast<std::uint8_t>(v & 0xff);
        }
        png_write_row(w.png, row.data());
    }
    png_write_end(w.png, nullptr);
    return q;
}

std::vector<double> decode_png_gray16(std::string_view png, double min, double max, std::size_t& height,
                                      std::size_t& width) {
    const auto raw = read_png(png, 1, height, width);
    std::vector<double> out(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) out[i] = min + double(raw[i]) / 65535.0 * (max - min);
    return out;
}

Tensor decode_image(std::string_view bytes) {
    std::size_t h = 0, w = 0;
    std::vector<double> interleaved;
    if (is_png(bytes)) {
        const auto raw = read_png(bytes, 3, h, w);
        interleaved.resize(raw.size());
        for (std::size_t i = 0; i < raw.size(); ++i) interleaved[i] = double(raw[i]) / 65535.0;
    } else {
        interleaved = read_pnm(bytes, '6', h, w);
    }
    Tensor img({3, h, w});
    for (std::size_t i = 0; i < h * w; ++i) {
        for (std::size_t c = 0; c < 3; ++c) img[c * h * w + i] = interleaved[3 * i + c];
    }
    return img;
}

Tensor decode_gray(std::string_view bytes) {
    std::size_t h = 0, w = 0;
    std::vector<double> v;
    if (is_png(bytes)) {
        const auto raw = read_png(bytes, 1, h, w);
        v.resize(raw.size());
        for (std::size_t i = 0; i < raw.size(); ++i) v[i] = double(raw[i]) / 65535.0;
    } else {
        v = read_pnm(bytes, '5', h, w);
    }
    return Tensor({h, w}, v);
}

const std::vector<std::uint8_t>& class_palette() {
    static const std::vector<std::uint8_t> palette = {
        0,   0,   0,   // background
        230, 25,  75,  // 1
        60,  180, 75,  // 2
        255, 225, 25,  // 3
        0,   130, 200, // 4
        245, 130, 48,  // 5
    };
    return palette;
}

} // namespace gbrs::service
