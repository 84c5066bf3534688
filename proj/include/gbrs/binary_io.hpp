#pragma once

#include "gbrs/errors.hpp"
#include "gbrs/tensor.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

namespace gbrs {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

/// Little-endian writer for checkpoint and snapshot files.
class ByteWriter {
  public:
    void u32(std::uint32_t v) { raw(&v, sizeof v); }
    void u64(std::uint64_t v) { raw(&v, sizeof v); }
    void f64(double v) { raw(&v, sizeof v); }
    void bytes(std::string_view s) { raw(s.data(), s.size()); }
    void string(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s);
    }
    void tensor(const Tensor& t) {
        u32(static_cast<std::uint32_t>(t.rank()));
        for (auto d : t.shape()) u64(d);
        raw(t.data().data(), t.numel() * sizeof(double));
    }
    void raw(const void* p, std::size_t n) {
        const auto* c = static_cast<const char*>(p);
        buf_.insert(buf_.end(), c, c + n);
    }
    const std::string& buffer() const { return buf_; }

  private:
    std::string buf_;
};

class ByteReader {
  public:
    ByteReader(std::string_view data, std::string what) : data_(data), what_(std::move(what)) {}

    std::uint32_t u32() { return pod<std::uint32_t>(); }
    std::uint64_t u64() { return pod<std::uint64_t>(); }
    double f64() { return pod<double>(); }
    std::string_view bytes(std::size_t n) {
        need(n);
        auto s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::string string() { return std::string(bytes(u32())); }
    Tensor tensor() {
        const std::uint32_t rank = u32();
        if (rank > 8) fail("tensor rank " + std::to_string(rank));
        Shape shape(rank);
        std::size_t n = 1;
        for (auto& d : shape) {
            d = u64();
            if (d > (std::size_t{1} << 32)) fail("tensor dimension " + std::to_string(d));
            n *= d;
        }
        need(n * sizeof(double));
        std::vector<double> v(n);
        std::memcpy(v.data(), data_.data() + pos_, n * sizeof(double));
        pos_ += n * sizeof(double);
        return Tensor(std::move(shape), std::move(v));
    }
    bool at_end() const { return pos_ == data_.size(); }
    [[noreturn]] void fail(const std::string& why) const {
        throw LoadError(what_ + ": " + why + " at byte " + std::to_string(pos_));
    }

  private:
    template <class T>
    T pod() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) fail("truncated (need " + std::to_string(n) + " bytes)");
    }

    std::string_view data_;
    std::string what_;
    std::size_t pos_ = 0;
};

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view data);

} // namespace gbrs
