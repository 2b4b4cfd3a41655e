#pragma once

#include <cstddef>

#include "nextdit/numkernel/tensor.hpp"

namespace nextdit::nk {

struct Grid2 {
    std::size_t h = 0;
    std::size_t w = 0;
    [[nodiscard]] std::size_t count() const noexcept { return h * w; }
    friend bool operator==(const Grid2&, const Grid2&) = default;
};

// c[i,j] = sum_k a[i,k] * b[k,j]. Both operands must be rank 2.
template <class T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);

// Stable softmax along `axis` (max-subtracted). NaN inputs propagate to NaN outputs.
template <class T>
BasicTensor<T> softmax(const BasicTensor<T>& x, std::size_t axis);

// y = x / sqrt(mean(x^2) + eps) * gain over the last axis. gain has length cols().
template <class T>
BasicTensor<T> rms_norm(const BasicTensor<T>& x, const BasicTensor<T>& gain, T eps);

// Averages an h*w token grid over (wh, ww) windows. Edge windows that overhang the grid
// average only the tokens they contain. Output has ceil(h/wh)*ceil(w/ww) rows.
template <class T>
BasicTensor<T> avg_pool_tokens(const BasicTensor<T>& x, Grid2 grid, Grid2 window);

[[nodiscard]] constexpr std::size_t ceil_div(std::size_t a, std::size_t b) noexcept { return (a + b - 1) / b; }

[[nodiscard]] inline Grid2 pooled_grid(Grid2 grid, Grid2 window) noexcept {
    return {ceil_div(grid.h, window.h), ceil_div(grid.w, window.w)};
}

// Root mean square of each row (last axis).
template <class T>
BasicTensor<T> row_rms(const BasicTensor<T>& x);

// Elementwise helpers used by the samplers and tests.
template <class T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T>
BasicTensor<T> scaled(const BasicTensor<T>& a, T s);
// a + s * b
template <class T>
BasicTensor<T> axpy(const BasicTensor<T>& a, T s, const BasicTensor<T>& b);

template <class T>
T max_abs_diff(const BasicTensor<T>& a, const BasicTensor<T>& b);

void require_same_shape(const Shape& a, const Shape& b, const char* what);

}  // namespace nextdit::nk
