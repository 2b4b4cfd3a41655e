#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace nextdit::nk {

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

template <class T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::f32; }
template <>
constexpr DType dtype_of<double>() { return DType::f64; }

using Shape = std::vector<std::size_t>;

std::size_t shape_product(std::span<const std::size_t> shape);
std::string shape_string(std::span<const std::size_t> shape);

// Dense row-major tensor. product(shape) == data.size() always holds.
template <class T>
class BasicTensor {
public:
    using value_type = T;

    BasicTensor() = default;
    explicit BasicTensor(Shape shape, T fill = T{0});
    BasicTensor(Shape shape, std::vector<T> data);
    BasicTensor(std::initializer_list<std::size_t> shape, std::initializer_list<T> values);

    static BasicTensor scalar(T value) { return BasicTensor(Shape{}, std::vector<T>{value}); }

    [[nodiscard]] const Shape& shape() const noexcept { return shape_; }
    [[nodiscard]] std::size_t rank() const noexcept { return shape_.size(); }
    [[nodiscard]] std::size_t dim(std::size_t axis) const;
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
    [[nodiscard]] bool empty() const noexcept { return data_.empty(); }
    [[nodiscard]] static constexpr DType dtype() noexcept { return dtype_of<T>(); }

    // Last axis length, and the product of all leading axes.
    [[nodiscard]] std::size_t cols() const noexcept { return shape_.empty() ? 1 : shape_.back(); }
    [[nodiscard]] std::size_t rows() const noexcept { return cols() == 0 ? 0 : size() / cols(); }

    [[nodiscard]] std::span<T> data() noexcept { return data_; }
    [[nodiscard]] std::span<const T> data() const noexcept { return data_; }
    [[nodiscard]] const std::vector<T>& values() const noexcept { return data_; }

    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    // Row-major 2D view over (rows(), cols()).
    T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols() + c]; }
    const T& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols() + c]; }

    std::span<T> row(std::size_t r) noexcept { return std::span<T>(data_).subspan(r * cols(), cols()); }
    std::span<const T> row(std::size_t r) const noexcept {
        return std::span<const T>(data_).subspan(r * cols(), cols());
    }

    [[nodiscard]] BasicTensor reshaped(Shape shape) const&;
    [[nodiscard]] BasicTensor reshaped(Shape shape) &&;

    void fill(T value);

    template <class U>
    [[nodiscard]] BasicTensor<U> cast() const {
        std::vector<U> out(data_.begin(), data_.end());
        return BasicTensor<U>(shape_, std::move(out));
    }

    friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    Shape shape_;
    std::vector<T> data_;
};

using Tensor = BasicTensor<double>;
using TensorF = BasicTensor<float>;

extern template class BasicTensor<float>;
extern template class BasicTensor<double>;

}  // namespace nextdit::nk
