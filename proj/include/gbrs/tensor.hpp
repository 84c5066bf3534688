#pragma once

#include <cstddef>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace gbrs {

using Shape = std::vector<std::size_t>;

/// Cache-line aligned allocator. Vectorised kernels peel a different number
/// of leading elements depending on alignment, which changes rounding, so
/// every buffer starts on the same boundary to keep results reproducible.
template <class T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlignment{64};

    AlignedAllocator() noexcept = default;
    template <class U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

    template <class U>
    bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using AlignedBuffer = std::vector<double, AlignedAllocator<double>>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense row-major array of doubles. Feature maps use N x C x H x W.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, const std::vector<double>& data);
    Tensor(Shape shape, AlignedBuffer data);

    static Tensor scalar(double value) { return Tensor(Shape{1}, value); }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    /// Element access for rank-4 tensors.
    double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w);
    double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const;

    double item() const;

    /// Same data viewed under a new shape with equal element count.
    Tensor reshaped(Shape shape) const;

    void fill(double value);

    bool all_finite() const;

    /// Bitwise equality of shape and payload.
    bool identical(const Tensor& other) const;

  private:
    Shape shape_;
    AlignedBuffer data_;
};

double max_abs_diff(const Tensor& a, const Tensor& b);

} // namespace gbrs
