#include "nextdit/numkernel/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nextdit/numkernel/error.hpp"

namespace nextdit::nk {

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
    if (a != b) {
        throw DimensionError(std::string(what) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
    }
}

template <class T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2) {
        throw DimensionError("matmul: operands must be rank 2, got " + shape_string(a.shape()) + " and " +
                             shape_string(b.shape()));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        throw DimensionError("matmul: inner axes differ " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
    }
    BasicTensor<T> c(Shape{m, n});
    const T* pa = a.data().data();
    const T* pb = b.data().data();
    T* pc = c.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        T* crow = pc + i * n;
        const T* arow = pa + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = arow[p];
            if (av == T{0}) continue;
            const T* brow = pb + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

template <class T>
BasicTensor<T> softmax(const BasicTensor<T>& x, std::size_t axis) {
    if (axis >= x.rank()) {
        throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for rank " + std::to_string(x.rank()));
    }
    const auto& s = x.shape();
    const std::size_t len = s[axis];
    std::size_t inner = 1;
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    const std::size_t outer = len == 0 ? 0 : x.size() / (len * inner);

    BasicTensor<T> y(s);
    const T* px = x.data().data();
    T* py = y.data().data();
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            T mx = -std::numeric_limits<T>::infinity();
            bool has_nan = false;
            for (std::size_t i = 0; i < len; ++i) {
                const T v = px[base + i * inner];
                if (std::isnan(v)) has_nan = true;
                mx = std::max(mx, v);
            }
            if (has_nan) {
                for (std::size_t i = 0; i < len; ++i) py[base + i * inner] = std::numeric_limits<T>::quiet_NaN();
                continue;
            }
            T sum = 0;
            for (std::size_t i = 0; i < len; ++i) {
                const T e = std::exp(px[base + i * inner] - mx);
                py[base + i * inner] = e;
                sum += e;
            }
            for (std::size_t i = 0; i < len; ++i) py[base + i * inner] /= sum;
        }
    }
    return y;
}

template <class T>
BasicTensor<T> rms_norm(const BasicTensor<T>& x, const BasicTensor<T>& gain, T eps) {
    const std::size_t d = x.cols();
    if (gain.size() != d) {
        throw DimensionError("rms_norm: gain length " + std::to_string(gain.size()) + " vs feature width " +
                             std::to_string(d));
    }
    BasicTensor<T> y(x.shape());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto in = x.row(r);
        auto out = y.row(r);
        T ss = 0;
        for (T v : in) ss += v * v;
        const T inv = T{1} / std::sqrt(ss / static_cast<T>(d) + eps);
        for (std::size_t j = 0; j < d; ++j) out[j] = in[j] * inv * gain[j];
    }
    return y;
}

template <class T>
BasicTensor<T> avg_pool_tokens(const BasicTensor<T>& x, Grid2 grid, Grid2 window) {
    if (x.rank() != 2 || x.dim(0) != grid.count()) {
        throw GridError("avg_pool_tokens: " + shape_string(x.shape()) + " is not a " + std::to_string(grid.h) + "x" +
                        std::to_string(grid.w) + " token grid");
    }
    if (window.h == 0 || window.w == 0) throw GridError("avg_pool_tokens: empty window");
    const std::size_t d = x.dim(1);
    const Grid2 out_grid = pooled_grid(grid, window);
    BasicTensor<T> y(Shape{out_grid.count(), d});
    for (std::size_t oh = 0; oh < out_grid.h; ++oh) {
        for (std::size_t ow = 0; ow < out_grid.w; ++ow) {
            auto out = y.row(oh * out_grid.w + ow);
            const std::size_t h1 = std::min(grid.h, (oh + 1) * window.h);
            const std::size_t w1 = std::min(grid.w, (ow + 1) * window.w);
            std::size_t count = 0;
            for (std::size_t hh = oh * window.h; hh < h1; ++hh) {
                for (std::size_t ww = ow * window.w; ww < w1; ++ww) {
                    auto in = x.row(hh * grid.w + ww);
                    for (std::size_t j = 0; j < d; ++j) out[j] += in[j];
                    ++count;
                }
            }
            for (auto& v : out) v /= static_cast<T>(count);
        }
    }
    return y;
}

template <class T>
BasicTensor<T> row_rms(const BasicTensor<T>& x) {
    BasicTensor<T> out(Shape{x.rows()});
    for (std::size_t r = 0; r < x.rows(); ++r) {
        T ss = 0;
        for (T v : x.row(r)) ss += v * v;
        out[r] = std::sqrt(ss / static_cast<T>(x.cols()));
    }
    return out;
}

template <class T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_same_shape(a.shape(), b.shape(), "add");
    BasicTensor<T> c(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) c[i] = a[i] + b[i];
    return c;
}

template <class T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_same_shape(a.shape(), b.shape(), "sub");
    BasicTensor<T> c(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) c[i] = a[i] - b[i];
    return c;
}

template <class T>
BasicTensor<T> scaled(const BasicTensor<T>& a, T s) {
    BasicTensor<T> c(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) c[i] = a[i] * s;
    return c;
}

template <class T>
BasicTensor<T> axpy(const BasicTensor<T>& a, T s, const BasicTensor<T>& b) {
    require_same_shape(a.shape(), b.shape(), "axpy");
    BasicTensor<T> c(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) c[i] = a[i] + s * b[i];
    return c;
}

template <class T>
T max_abs_diff(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_same_shape(a.shape(), b.shape(), "max_abs_diff");
    T m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

#define NEXTDIT_INSTANTIATE(T)                                                               \
    template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);            \
    template BasicTensor<T> softmax(const BasicTensor<T>&, std::size_t);                     \
    template BasicTensor<T> rms_norm(const BasicTensor<T>&, const BasicTensor<T>&, T);       \
    template BasicTensor<T> avg_pool_tokens(const BasicTensor<T>&, Grid2, Grid2);            \
    template BasicTensor<T> row_rms(const BasicTensor<T>&);                                  \
    template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);               \
    template BasicTensor<T> sub(const BasicTensor<T>&, const BasicTensor<T>&);               \
    template BasicTensor<T> scaled(const BasicTensor<T>&, T);                                \
    template BasicTensor<T> axpy(const BasicTensor<T>&, T, const BasicTensor<T>&);           \
    template T max_abs_diff(const BasicTensor<T>&, const BasicTensor<T>&);

NEXTDIT_INSTANTIATE(float)
NEXTDIT_INSTANTIATE(double)

#undef NEXTDIT_INSTANTIATE

}  // namespace nextdit::nk
