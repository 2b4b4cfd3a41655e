#include "nextdit/numkernel/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include "nextdit/numkernel/error.hpp"

namespace nextdit::nk {

std::size_t shape_product(std::span<const std::size_t> shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

std::string shape_string(std::span<const std::size_t> shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

template <class T>
BasicTensor<T>::BasicTensor(Shape shape, T fill) : shape_(std::move(shape)), data_(shape_product(shape_), fill) {}

template <class T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_product(shape_) != data_.size()) {
        throw DimensionError("tensor: shape " + shape_string(shape_) + " does not match " +
                             std::to_string(data_.size()) + " elements");
    }
}

template <class T>
BasicTensor<T>::BasicTensor(std::initializer_list<std::size_t> shape, std::initializer_list<T> values)
    : BasicTensor(Shape(shape), std::vector<T>(values)) {}

template <class T>
std::size_t BasicTensor<T>::dim(std::size_t axis) const {
    if (axis >= shape_.size()) {
        throw DimensionError("tensor: axis " + std::to_string(axis) + " out of range for rank " +
                             std::to_string(shape_.size()));
    }
    return shape_[axis];
}

template <class T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape shape) const& {
    return BasicTensor(std::move(shape), data_);
}

template <class T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape shape) && {
    return BasicTensor(std::move(shape), std::move(data_));
}

template <class T>
void BasicTensor<T>::fill(T value) {
    std::fill(data_.begin(), data_.end(), value);
}

template class BasicTensor<float>;
template class BasicTensor<double>;

}  // namespace nextdit::nk
